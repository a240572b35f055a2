"""Experiment configuration: YAML key-value tree <-> validated dataclasses."""

from __future__ import annotations

import dataclasses
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .availability import MODES
from .domain import ConfigError, ExperimentSeeds

SAMPLERS = ("fedgs", "uniform", "md", "poc")
GRAPH_METHODS = ("oracle", "cosine", "functional", "sspp")
SCHEMES = ("synthetic", "dirichlet", "two_label")


@dataclass
class DatasetConfig:
    scheme: str = "synthetic"
    alpha: float = 0.5
    beta: float = 0.5
    test_fraction: float = 0.2
    train_fraction: float = 0.8
    # dirichlet / two_label partition a generated example pool
    pool_size: int = 6000
    dir_alpha: float = 1.75
    max_retries: int = 10000


@dataclass
class SamplerConfig:
    name: str = "fedgs"
    alpha: float = 1.0
    solver: str = "heuristic"
    time_budget: float | None = None
    max_iters: int | None = None
    # auto: weighted for fedgs/uniform, plain mean over draws for md/poc
    aggregation: str = "auto"
    poc_loss_cap: int | None = None


@dataclass
class GraphConfig:
    method: str = "oracle"
    epsilon: float = 0.1
    sigma2: float = 0.01
    noise_batch: int = 64
    noise_pool: int = 500


@dataclass
class AvailabilityConfig:
    mode: str = "IDL"
    beta: float = 0.0
    period: int = 40
    lognormal_param: str = "std"


@dataclass
class TrainerConfig:
    E: int = 10
    # None resolves to 10 for synthetic data, 32 for the partitioned pools
    B: int | None = None
    eta0: float = 0.1
    decay: float = 0.998
    prox_mu: float = 0.0


@dataclass
class SeedConfig:
    data_seed: int = 0
    train_seed: int = 0
    availability_seed: int = 0

    def to_seeds(self) -> ExperimentSeeds:
        return ExperimentSeeds(self.data_seed, self.train_seed, self.availability_seed)


@dataclass
class OutputConfig:
    dir: str | None = None
    trace: bool = False
    counts: bool = True


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    num_clients: int = 30
    clients_per_round: int | None = None
    fraction: float | None = 0.2
    rounds: int = 1000
    workers: int = 1
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    graph: GraphConfig = field(default_factory=GraphConfig)
    availability: AvailabilityConfig = field(default_factory=AvailabilityConfig)
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    seeds: SeedConfig = field(default_factory=SeedConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    @property
    def M(self) -> int:
        if self.clients_per_round is not None:
            return self.clients_per_round
        return max(1, int(round(self.fraction * self.num_clients)))

    @property
    def aggregation(self) -> str:
        if self.sampler.aggregation != "auto":
            return self.sampler.aggregation
        return "weighted" if self.sampler.name in ("fedgs", "uniform") else "uniform"

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def dumps(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def copy(self, **overrides) -> "ExperimentConfig":
        return apply_overrides(from_dict(self.to_dict()), overrides)


def _coerce(value, tp, path: str):
    origin = typing.get_origin(tp)
    if origin in (typing.Union, types.UnionType):
        args = typing.get_args(tp)
        if value is None:
            if type(None) in args:
                return None
            raise ConfigError(path, "must not be null")
        inner = [a for a in args if a is not type(None)]
        return _coerce(value, inner[0], path)
    if dataclasses.is_dataclass(tp):
        if not isinstance(value, dict):
            raise ConfigError(path, "expected a mapping")
        return _build(tp, value, f"{path}.")
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected true/false, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
        return value
    raise ConfigError(path, f"unsupported field type {tp}")


def _build(cls, data: dict, prefix: str = ""):
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            raise ConfigError(f"{prefix}{key}", "unknown field")
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name in data:
            kwargs[f.name] = _coerce(data[f.name], hints[f.name], f"{prefix}{f.name}")
    return cls(**kwargs)


def _check(cond: bool, path: str, message: str) -> None:
    if not cond:
        raise ConfigError(path, message)


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    _check(cfg.num_clients >= 2, "num_clients", "must be >= 2")
    _check(cfg.rounds >= 0, "rounds", "must be >= 0")
    _check(cfg.workers >= 1, "workers", "must be >= 1")
    if cfg.clients_per_round is not None:
        _check(cfg.clients_per_round >= 1, "clients_per_round", "must be >= 1")
    else:
        _check(cfg.fraction is not None, "fraction", "set either clients_per_round or fraction")
        _check(0 < cfg.fraction <= 1, "fraction", "must lie in (0, 1]")
    d = cfg.dataset
    _check(d.scheme in SCHEMES, "dataset.scheme", f"must be one of {SCHEMES}")
    _check(d.alpha >= 0, "dataset.alpha", "must be >= 0")
    _check(d.beta >= 0, "dataset.beta", "must be >= 0")
    _check(0 <= d.test_fraction < 1, "dataset.test_fraction", "must lie in [0, 1)")
    _check(0 < d.train_fraction < 1, "dataset.train_fraction", "must lie in (0, 1)")
    _check(d.dir_alpha > 0, "dataset.dir_alpha", "must be > 0")
    _check(d.pool_size >= 2, "dataset.pool_size", "must be >= 2")
    s = cfg.sampler
    _check(s.name in SAMPLERS, "sampler.name", f"must be one of {SAMPLERS}")
    _check(s.alpha >= 0, "sampler.alpha", "must be >= 0")
    _check(s.solver in ("heuristic", "exact"), "sampler.solver", "must be 'heuristic' or 'exact'")
    _check(s.aggregation in ("auto", "weighted", "uniform"), "sampler.aggregation", "must be auto, weighted or uniform")
    if s.time_budget is not None:
        _check(s.time_budget >= 0, "sampler.time_budget", "must be >= 0")
    if s.max_iters is not None:
        _check(s.max_iters >= 0, "sampler.max_iters", "must be >= 0")
    g = cfg.graph
    _check(g.method in GRAPH_METHODS, "graph.method", f"must be one of {GRAPH_METHODS}")
    _check(g.epsilon >= 0, "graph.epsilon", "must be >= 0")
    _check(g.sigma2 > 0, "graph.sigma2", "must be > 0")
    _check(g.noise_batch >= 1, "graph.noise_batch", "must be >= 1")
    a = cfg.availability
    a.mode = a.mode.upper()
    _check(a.mode in MODES, "availability.mode", f"must be one of {MODES}")
    _check(0 <= a.beta <= 1, "availability.beta", f"must lie in [0, 1], got {a.beta}")
    _check(not (a.mode in ("LN", "SLN") and a.beta >= 1), "availability.beta", f"{a.mode} requires beta < 1")
    _check(a.period >= 1, "availability.period", "must be >= 1")
    _check(a.lognormal_param in ("std", "var"), "availability.lognormal_param", "must be 'std' or 'var'")
    t = cfg.trainer
    if t.B is None:
        t.B = 10 if d.scheme == "synthetic" else 32
    _check(t.E >= 1, "trainer.E", "must be >= 1")
    _check(t.B >= 1, "trainer.B", "must be >= 1")
    _check(t.eta0 > 0, "trainer.eta0", "must be > 0")
    _check(0 < t.decay <= 1, "trainer.decay", "must lie in (0, 1]")
    _check(t.prox_mu >= 0, "trainer.prox_mu", "must be >= 0")
    return cfg


def from_dict(data: dict | None) -> ExperimentConfig:
    return validate(_build(ExperimentConfig, data or {}))


def parse_config(source) -> ExperimentConfig:
    """Load a YAML file (path) or an already-parsed mapping."""
    if isinstance(source, dict):
        return from_dict(source)
    path = Path(source)
    if not path.is_file():
        raise ConfigError(str(path), "config file not found")
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(str(path), f"malformed YAML: {exc}") from exc
    if data is not None and not isinstance(data, dict):
        raise ConfigError(str(path), "top level must be a mapping")
    return from_dict(data)


def apply_overrides(cfg: ExperimentConfig, overrides: dict[str, object]) -> ExperimentConfig:
    """Apply dotted-key overrides (``{"trainer.E": 5}``) and re-validate."""
    data = cfg.to_dict()
    for key, value in overrides.items():
        node = data
        parts = key.split(".")
        for p in parts[:-1]:
            if not isinstance(node.get(p), dict):
                raise ConfigError(key, "unknown field")
            node = node[p]
        if parts[-1] not in node:
            raise ConfigError(key, "unknown field")
        node[parts[-1]] = value
    return from_dict(data)


def parse_override(text: str) -> tuple[str, object]:
    if "=" not in text:
        raise ConfigError(text, "override must look like key=value")
    key, raw = text.split("=", 1)
    return key.strip(), yaml.safe_load(raw)
