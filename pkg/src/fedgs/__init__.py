"""Federated learning simulator with graph-based client sampling under arbitrary availability."""

from .config import ExperimentConfig, parse_config
from .domain import ClientProfile, ExperimentSeeds, SamplerState, counts_variance, z_vector
from .engine import ExperimentResult, RoundRecord, run_experiment

__all__ = [
    "ClientProfile",
    "ExperimentConfig",
    "ExperimentResult",
    "ExperimentSeeds",
    "RoundRecord",
    "SamplerState",
    "counts_variance",
    "parse_config",
    "run_experiment",
    "z_vector",
]

__version__ = "0.1.0"
