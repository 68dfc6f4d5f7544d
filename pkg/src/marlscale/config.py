"""Run and sweep configuration files (JSON or YAML).

A config file is one mapping. Top-level keys select the run; optional
``algo`` and ``env`` sections override trainer and environment constants;
an optional ``sweep`` section turns the file into a sweep definition::

    {"algorithm": "maddpg", "scenario": "predator_prey", "n_agents": 3,
     "episodes": 2000, "seed": 0,
     "algo": {"gamma": 0.95},
     "sweep": {"agent_counts": [3, 6, 12], "repetitions": 3}}

Anything left out takes its default. Unknown keys are rejected.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Union

import yaml

from .algos import ALGORITHMS, AlgoConfig
from .envs import SCENARIOS, EnvConfig
from .profiler import check_doubling
from .replay import GATHER_MODES


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending field path."""


_ALGO_FIELDS = {f.name: f for f in dataclasses.fields(AlgoConfig) if f.name != "algorithm"}
_ENV_FIELDS = {f.name: f for f in dataclasses.fields(EnvConfig) if f.name not in ("scenario", "n_learners")}


@dataclass(frozen=True)
class RunConfig:
    algorithm: str = "maddpg"
    scenario: str = "predator_prey"
    n_agents: int = 3
    episodes: int = 2000
    seed: int = 0
    profile: bool = True
    gather_workers: int = 1
    gather_mode: str = "record"
    stable_allocator: bool = True
    checkpoint: bool = True
    algo: Dict[str, Any] = field(default_factory=dict)
    env: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"algorithm: must be one of {', '.join(ALGORITHMS)} (got {self.algorithm!r})")
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"scenario: must be one of {', '.join(SCENARIOS)} (got {self.scenario!r})")
        if self.gather_mode not in GATHER_MODES:
            raise ConfigError(f"gather_mode: must be one of {', '.join(GATHER_MODES)}")
        for name in ("n_agents", "episodes", "gather_workers"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name}: must be >= 1")
        if self.seed < 0:
            raise ConfigError("seed: must be >= 0")
        # building both sub-configs validates every override
        self.algo_config()
        self.env_config()

    def algo_config(self) -> AlgoConfig:
        try:
            return AlgoConfig(algorithm=self.algorithm, **self.algo)
        except ValueError as exc:
            raise ConfigError(f"algo.{exc}") from None

    def env_config(self, n_agents: int | None = None) -> EnvConfig:
        try:
            return EnvConfig(scenario=self.scenario, n_learners=n_agents or self.n_agents, **self.env)
        except ValueError as exc:
            raise ConfigError(f"env: {exc}") from None

    def with_agents(self, n: int) -> "RunConfig":
        return dataclasses.replace(self, n_agents=n)

    def with_seed(self, seed: int) -> "RunConfig":
        return dataclasses.replace(self, seed=seed)

    def to_dict(self) -> Dict[str, Any]:
        """Effective configuration with every default spelled out."""
        out = {f.name: getattr(self, f.name) for f in dataclasses.fields(self) if f.name not in ("algo", "env")}
        algo = dataclasses.asdict(self.algo_config())
        algo.pop("algorithm")
        out["algo"] = algo
        env = {k: self.env.get(k, f.default) for k, f in _ENV_FIELDS.items()}
        out["env"] = env
        return out


@dataclass(frozen=True)
class SweepConfig:
    base: RunConfig = field(default_factory=RunConfig)
    agent_counts: List[int] = field(default_factory=lambda: [3, 6, 12])
    repetitions: int = 3
    parallel: bool = False

    def __post_init__(self):
        try:
            check_doubling(self.agent_counts)
        except ValueError as exc:
            raise ConfigError(f"sweep.agent_counts: {exc}") from None
        if self.repetitions < 1:
            raise ConfigError("sweep.repetitions: must be >= 1")

    def to_dict(self) -> Dict[str, Any]:
        out = self.base.to_dict()
        out["sweep"] = {"agent_counts": list(self.agent_counts), "repetitions": self.repetitions, "parallel": self.parallel}
        return out


_RUN_TYPES = {
    "algorithm": str, "scenario": str, "n_agents": int, "episodes": int, "seed": int,
    "profile": bool, "gather_workers": int, "gather_mode": str, "stable_allocator": bool,
    "checkpoint": bool, "algo": dict, "env": dict,
}
_SWEEP_TYPES = {"agent_counts": list, "repetitions": int, "parallel": bool}


def _check_type(path: str, value: Any, expected: type) -> None:
    if expected is float:
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    elif expected is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    else:
        ok = isinstance(value, expected)
    if not ok:
        raise ConfigError(f"{path}: expected {expected.__name__}, got {type(value).__name__}")


def _check_section(prefix: str, data: Mapping[str, Any], fields: Mapping[str, dataclasses.Field]) -> None:
    for key, value in data.items():
        if key not in fields:
            raise ConfigError(f"{prefix}.{key}: unknown key")
        f = fields[key]
        if value is None and f.default is None:
            continue
        kind = {"int": int, "float": float, "str": str, "Optional[int]": int}.get(str(f.type), None)
        if kind is not None:
            _check_type(f"{prefix}.{key}", value, kind)


def config_from_dict(data: Mapping[str, Any]) -> Union[RunConfig, SweepConfig]:
    if not isinstance(data, Mapping):
        raise ConfigError("<root>: config must be a mapping")
    data = dict(data)
    sweep = data.pop("sweep", None)
    for key, value in data.items():
        if key not in _RUN_TYPES:
            raise ConfigError(f"{key}: unknown key")
        _check_type(key, value, _RUN_TYPES[key])
    _check_section("algo", data.get("algo", {}), _ALGO_FIELDS)
    _check_section("env", data.get("env", {}), _ENV_FIELDS)
    run = RunConfig(**data)
    if sweep is None:
        return run
    if not isinstance(sweep, Mapping):
        raise ConfigError("sweep: must be a mapping")
    for key, value in sweep.items():
        if key not in _SWEEP_TYPES:
            raise ConfigError(f"sweep.{key}: unknown key")
        _check_type(f"sweep.{key}", value, _SWEEP_TYPES[key])
    return SweepConfig(base=run, **sweep)


def load_config(path: Union[str, Path]) -> Union[RunConfig, SweepConfig]:
    path = Path(path)
    text = path.read_text()
    try:
        if path.suffix in (".yaml", ".yml"):
            data = yaml.safe_load(text)
        else:
            data = json.loads(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"<root>: cannot parse {path}: {exc}") from None
    if data is None:
        data = {}
    return config_from_dict(data)
