"""Core value types, error classes, seeding helpers and the sampling-count metrics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ModelParams = np.ndarray


class FedGSError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(FedGSError, ValueError):
    pass


class PartitionInfeasibleError(FedGSError):
    pass


class TooLargeError(FedGSError):
    pass


class ConfigError(FedGSError, ValueError):
    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


class DivergenceError(FedGSError):
    def __init__(self, client_id: int, round_index: int, message: str = "non-finite loss or gradient"):
        self.client_id = client_id
        self.round_index = round_index
        super().__init__(f"client {client_id} diverged in round {round_index}: {message}")


# Stream tags mixed into sub-seeds so independent consumers never share entropy.
STREAM_SYNTHETIC = 1
STREAM_PARTITION = 2
STREAM_SPLIT = 3
STREAM_LOCAL_SGD = 4
STREAM_SAMPLER = 5
STREAM_NOISE = 6
STREAM_AVAIL_STATIC = 7
STREAM_AVAIL_ROUND = 8
STREAM_SSPP = 9
STREAM_TEST = 10


def derive_rng(seed: int, *keys: int) -> np.random.Generator:
    """Return a generator keyed on ``(seed, *keys)``.

    Sub-streams are independent of evaluation order, which is what makes the
    parallel paths reproduce the sequential ones.
    """
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF, *(int(k) for k in keys)]
    return np.random.default_rng(np.random.SeedSequence(entropy))


@dataclass(frozen=True)
class ClientProfile:
    id: int
    n_k: int
    labels: frozenset[int] = frozenset()
    features: np.ndarray | None = None

    def __post_init__(self):
        if self.n_k < 1:
            raise InvalidInputError(f"client {self.id}: n_k must be >= 1, got {self.n_k}")
        object.__setattr__(self, "labels", frozenset(int(y) for y in self.labels))


@dataclass(frozen=True)
class ExperimentSeeds:
    data_seed: int = 0
    train_seed: int = 0
    availability_seed: int = 0

    def as_dict(self) -> dict[str, int]:
        return {
            "data_seed": self.data_seed,
            "train_seed": self.train_seed,
            "availability_seed": self.availability_seed,
        }


@dataclass
class SamplerState:
    """Per-client sampling counts. Owned and mutated by the engine only."""

    v: np.ndarray
    t: int = 0
    total_sampled: int = field(default=0)

    @classmethod
    def zeros(cls, n_clients: int) -> "SamplerState":
        return cls(v=np.zeros(n_clients, dtype=np.int64))

    def record(self, selected) -> None:
        ids = sorted(set(int(k) for k in selected))
        self.v[ids] += 1
        self.total_sampled += len(ids)
        self.t += 1


def counts_variance(v) -> float:
    """Unbiased sample variance of the sampling counts."""
    arr = np.asarray(v)
    if arr.ndim != 1 or arr.size < 2:
        raise InvalidInputError("counts_variance needs a vector of length >= 2")
    # deviations from an exact integer sum avoid drift for long runs
    n = arr.size
    total = int(arr.sum()) if np.issubdtype(arr.dtype, np.integer) else float(arr.sum())
    dev = arr.astype(np.float64) - total / n
    return float(np.dot(dev, dev) / (n - 1))


def z_vector(state: SamplerState | np.ndarray, M: int, N: int) -> np.ndarray:
    """Linear coefficients ``2 (v_k - mean(v) - M/N) + 1`` of the count-variance term."""
    v = state.v if isinstance(state, SamplerState) else np.asarray(state)
    if v.shape != (N,):
        raise InvalidInputError(f"count vector has shape {v.shape}, expected ({N},)")
    if M < 1:
        raise InvalidInputError("M must be >= 1")
    v = v.astype(np.float64)
    return 2.0 * (v - v.mean() - M / N) + 1.0
