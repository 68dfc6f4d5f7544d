"""Multi-agent actor-critic training with phase-level profiling and scaling sweeps."""

from .algos import ALGORITHMS, AlgoConfig, TrainerGroup, run_episode_loop
from .config import ConfigError, RunConfig, SweepConfig, load_config
from .envs import EnvConfig, ParticleEnv
from .profiler import PhaseId, PhaseReport, breakdown, growth_rates, merge
from .replay import BufferSet

__version__ = "0.1.0"

__all__ = [
    "ALGORITHMS", "AlgoConfig", "BufferSet", "ConfigError", "EnvConfig", "ParticleEnv", "PhaseId",
    "PhaseReport", "RunConfig", "SweepConfig", "TrainerGroup", "breakdown", "growth_rates", "load_config",
    "merge", "run_episode_loop",
]
