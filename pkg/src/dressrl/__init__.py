"""Diffusion-generated reward shaping for sparse-reward control, in numpy."""

from .config import RunConfig, load_config, parse_config
from .dress import DressConfig, DressShaper, combine_rewards
from .harness import MetricsRecord, rng_streams, run_training
from .mountaincar import MountainCarEnv
from .wireless import EnvConfig, MECLatencyEnv

__all__ = [
    "DressConfig",
    "DressShaper",
    "EnvConfig",
    "MECLatencyEnv",
    "MetricsRecord",
    "MountainCarEnv",
    "RunConfig",
    "combine_rewards",
    "load_config",
    "parse_config",
    "rng_streams",
    "run_training",
]

__version__ = "0.1.0"
