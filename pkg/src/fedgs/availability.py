"""Per-round client availability.

Seven modes assign each client an active probability per round:

=====  ==========================================================
IDL    always active
MDF    more local data, more often active
LDF    less local data, more often active
YMF    clients whose smallest label is large are more active
YC     periodic activity keyed to the labels a client owns
LN     static lognormal propensity per client
SLN    LN propensity modulated by a sine wave over the period
=====  ==========================================================
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .domain import STREAM_AVAIL_ROUND, STREAM_AVAIL_STATIC, ClientProfile, ConfigError, InvalidInputError, derive_rng

MODES = ("IDL", "MDF", "LDF", "YMF", "YC", "LN", "SLN")


@dataclass
class AvailabilityModel:
    mode: str = "IDL"
    beta: float = 0.0
    period: int = 40
    num_y: int | None = None
    # whether ln(1/(1-beta)) is the std or the variance of the underlying normal
    lognormal_param: str = "std"
    sizes: np.ndarray = field(default=None, repr=False)
    labels: list[frozenset[int]] = field(default=None, repr=False)
    c: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.mode = self.mode.upper()
        if self.mode not in MODES:
            raise ConfigError("availability.mode", f"unknown mode {self.mode!r}; expected one of {MODES}")
        if not 0.0 <= self.beta <= 1.0:
            raise ConfigError("availability.beta", f"must lie in [0, 1], got {self.beta}")
        if self.period < 1:
            raise ConfigError("availability.period", "must be a positive integer")
        if self.mode in ("LN", "SLN") and self.beta >= 1.0:
            raise ConfigError("availability.beta", f"{self.mode} requires beta < 1")
        if self.lognormal_param not in ("std", "var"):
            raise ConfigError("availability.lognormal_param", "must be 'std' or 'var'")

    @classmethod
    def build(cls, mode: str, beta: float, profiles, availability_seed: int, **kw) -> "AvailabilityModel":
        """Construct a model and bind it to ``profiles`` (static draws consume ``availability_seed``)."""
        m = cls(mode=mode, beta=beta, **kw)
        m.bind(profiles, availability_seed)
        return m

    def bind(self, profiles, availability_seed: int) -> "AvailabilityModel":
        profiles = sorted(profiles, key=lambda p: p.id)
        self.sizes = np.array([p.n_k for p in profiles], dtype=np.float64)
        self.labels = [p.labels for p in profiles]
        if self.mode in ("YMF", "YC") and any(not lab for lab in self.labels):
            raise InvalidInputError(f"{self.mode} needs every client to own at least one label")
        if self.mode == "YC" and self.num_y is None:
            self.num_y = 1 + max(max(lab) for lab in self.labels)
        if self.mode in ("LN", "SLN"):
            s = math.log(1.0 / (1.0 - self.beta))
            sigma = s if self.lognormal_param == "std" else math.sqrt(s)
            rng = derive_rng(availability_seed, STREAM_AVAIL_STATIC)
            self.c = rng.lognormal(0.0, sigma, size=len(profiles))
        return self

    @property
    def N(self) -> int:
        return len(self.sizes)

    def phase(self, t: int) -> float:
        return (1 + (t % self.period)) / self.period

    def rates(self, t: int) -> np.ndarray:
        """Active probability of every client at round ``t``."""
        if self.sizes is None:
            raise InvalidInputError("availability model is not bound to client profiles")
        beta = self.beta
        if self.mode == "IDL":
            return np.ones(self.N)
        if self.mode == "MDF":
            p = self.sizes ** beta
            return p / p.max()
        if self.mode == "LDF":
            p = self.sizes ** -beta
            return p / p.max()
        if self.mode == "YMF":
            top = max(max(lab) for lab in self.labels)
            low = np.array([min(lab) for lab in self.labels], dtype=np.float64)
            # a global max label of 0 means every client only owns label 0
            frac = low / top if top > 0 else np.zeros(self.N)
            return beta * frac + (1.0 - beta)
        if self.mode == "YC":
            ph = self.phase(t)
            hit = np.array(
                [any(y / self.num_y <= ph < (y + 1) / self.num_y for y in lab) for lab in self.labels],
                dtype=np.float64,
            )
            return beta * hit + (1.0 - beta)
        base = self.c / self.c.max()
        if self.mode == "LN":
            return base
        return base * (0.4 * math.sin(2.0 * math.pi * self.phase(t)) + 0.5)


def active_rate(model: AvailabilityModel, client: ClientProfile | int, t: int) -> float:
    k = client.id if isinstance(client, ClientProfile) else int(client)
    return float(model.rates(t)[k])


def sample_active_set(model: AvailabilityModel, t: int, availability_seed: int) -> list[int]:
    """Bernoulli draw per client, each keyed on ``(availability_seed, t, client_id)``."""
    p = model.rates(t)
    active = []
    for k in range(model.N):
        u = derive_rng(availability_seed, STREAM_AVAIL_ROUND, t, k).random()
        if u < p[k]:
            active.append(k)
    return active


def availability_trace(model: AvailabilityModel, T: int, availability_seed: int) -> list[list[int]]:
    return [sample_active_set(model, t, availability_seed) for t in range(T)]


def write_trace_csv(trace, N: int, path) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["round", "client_id", "active"])
        for t, A in enumerate(trace):
            on = set(A)
            for k in range(N):
                w.writerow([t, k, int(k in on)])
