"""Phase-level wall-clock accounting and the breakdown / growth views built on it."""

from __future__ import annotations

import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, Iterator, List, Sequence, Tuple

SCHEMA_VERSION = 1


class PhaseId(str, Enum):
    ActionSelection = "ActionSelection"
    ExperienceCollection = "ExperienceCollection"
    MiniBatchSampling = "MiniBatchSampling"
    TargetQCalculation = "TargetQCalculation"
    QLoss = "QLoss"
    PLoss = "PLoss"
    TargetUpdate = "TargetUpdate"
    Other = "Other"


UPDATE_CHILDREN = (
    PhaseId.MiniBatchSampling,
    PhaseId.TargetQCalculation,
    PhaseId.QLoss,
    PhaseId.PLoss,
    PhaseId.TargetUpdate,
)
UPDATE_ALL_TRAINERS = "UpdateAllTrainers"
# the combined back-propagation phase; TargetUpdate is folded in here
QP_LOSS = "QPLoss"
TOTAL = "Total"

COUNTER_KEYS = (
    "buffer_lookups",
    "cross_agent_policy_reads",
    "critic_input_dim",
    "critic_backprops",
    "actor_backprops",
    "update_rounds",
    "env_steps",
    "actor_params",
    "critic_params",
)

# metadata keys that must agree for two reports to be merged
_MERGE_KEYS = ("n_agents", "batch_size", "algorithm", "scenario", "episodes")


class ProfilerError(RuntimeError):
    pass


@dataclass
class PhaseReport:
    seconds: Dict[str, float] = field(default_factory=lambda: {p.value: 0.0 for p in PhaseId})
    calls: Dict[str, int] = field(default_factory=lambda: {p.value: 0 for p in PhaseId})
    counters: Dict[str, int] = field(default_factory=lambda: {k: 0 for k in COUNTER_KEYS})
    metadata: Dict[str, Any] = field(default_factory=dict)
    wall_seconds: float = 0.0
    enabled: bool = True
    _open: set = field(default_factory=set, repr=False, compare=False)

    @contextmanager
    def scope(self, phase: PhaseId) -> Iterator[None]:
        """Charge the enclosed block to ``phase``. Time is charged even if the block raises."""
        if not self.enabled:
            yield
            return
        key = PhaseId(phase).value
        if key in self._open:
            raise ProfilerError(f"nested scope of phase {key}")
        self._open.add(key)
        start = time.perf_counter()
        try:
            yield
        finally:
            self.seconds[key] += time.perf_counter() - start
            self.calls[key] += 1
            self._open.discard(key)

    @property
    def leaf_seconds(self) -> float:
        return sum(self.seconds.values())

    def phase_seconds(self, name: str) -> float:
        """Seconds for a leaf phase or one of the derived aggregates."""
        if name == UPDATE_ALL_TRAINERS:
            return sum(self.seconds[p.value] for p in UPDATE_CHILDREN)
        if name == QP_LOSS:
            return sum(self.seconds[p] for p in ("QLoss", "PLoss", "TargetUpdate"))
        if name == TOTAL:
            return self.leaf_seconds
        return self.seconds[PhaseId(name).value]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "metadata": self.metadata,
            "enabled": self.enabled,
            "wall_seconds": self.wall_seconds,
            "seconds": dict(self.seconds),
            "calls": dict(self.calls),
            "counters": dict(self.counters),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "PhaseReport":
        if data.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported report schema_version {data.get('schema_version')!r}")
        rep = cls(metadata=dict(data["metadata"]), wall_seconds=float(data["wall_seconds"]), enabled=bool(data["enabled"]))
        for p in PhaseId:
            rep.seconds[p.value] = float(data["seconds"][p.value])
            rep.calls[p.value] = int(data["calls"][p.value])
        rep.counters.update({k: int(v) for k, v in data["counters"].items()})
        return rep


def scoped_time(report: PhaseReport, phase: PhaseId, work: Callable[..., Any], *args, **kwargs) -> Any:
    with report.scope(phase):
        return work(*args, **kwargs)


def breakdown(report: PhaseReport, taxonomy: str = "top_level") -> List[Tuple[str, float, float]]:
    """(phase, seconds, percent) rows.

    ``top_level``: ActionSelection / UpdateAllTrainers / Other, as a share of
    all timed time. ``update_detail``: the four update sub-phases as a share
    of UpdateAllTrainers, with TargetUpdate folded into PLoss.
    """
    s = report.seconds
    if taxonomy == "top_level":
        rows = [
            (PhaseId.ActionSelection.value, s["ActionSelection"]),
            (UPDATE_ALL_TRAINERS, report.phase_seconds(UPDATE_ALL_TRAINERS)),
            (PhaseId.Other.value, s["ExperienceCollection"] + s["Other"]),
        ]
    elif taxonomy == "update_detail":
        rows = [
            (PhaseId.MiniBatchSampling.value, s["MiniBatchSampling"]),
            (PhaseId.TargetQCalculation.value, s["TargetQCalculation"]),
            (PhaseId.QLoss.value, s["QLoss"]),
            (PhaseId.PLoss.value, s["PLoss"] + s["TargetUpdate"]),
        ]
    else:
        raise ValueError(f"unknown taxonomy {taxonomy!r}")
    total = sum(sec for _, sec in rows)
    if total <= 0:
        raise ValueError("report has no timed phases")
    return [(name, sec, 100.0 * sec / total) for name, sec in rows]


GROWTH_PHASES = (
    PhaseId.ActionSelection.value,
    PhaseId.ExperienceCollection.value,
    PhaseId.MiniBatchSampling.value,
    PhaseId.TargetQCalculation.value,
    PhaseId.QLoss.value,
    PhaseId.PLoss.value,
    PhaseId.TargetUpdate.value,
    QP_LOSS,
    UPDATE_ALL_TRAINERS,
    TOTAL,
)


@dataclass
class GrowthTable:
    agent_counts: List[int]
    # pair label "3-6" -> phase -> ratio T(2N)/T(N)
    ratios: Dict[str, Dict[str, float]]

    @property
    def pairs(self) -> List[str]:
        return list(self.ratios)

    def to_dict(self) -> Dict[str, Any]:
        return {"agent_counts": self.agent_counts, "ratios": self.ratios}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "GrowthTable":
        return cls(list(data["agent_counts"]), {k: dict(v) for k, v in data["ratios"].items()})


def pair_label(n: int) -> str:
    return f"{n}-{2 * n}"


def check_doubling(counts: Sequence[int]) -> None:
    if len(counts) < 2:
        raise ValueError("need at least two agent counts")
    for a, b in zip(counts, counts[1:]):
        if b != 2 * a:
            raise ValueError(f"non-doubling sequence: {list(counts)}")


def growth_rates(reports: Sequence[PhaseReport]) -> GrowthTable:
    """Per-phase ratio of time at 2N to time at N for consecutive reports."""
    counts = [int(r.metadata["n_agents"]) for r in reports]
    check_doubling(counts)
    ratios: Dict[str, Dict[str, float]] = {}
    for lo, hi, n in zip(reports, reports[1:], counts):
        row = {}
        for phase in GROWTH_PHASES:
            a, b = lo.phase_seconds(phase), hi.phase_seconds(phase)
            if a > 0 and b > 0:
                row[phase] = b / a
        ratios[pair_label(n)] = row
    return GrowthTable(counts, ratios)


def merge(reports: Sequence[PhaseReport]) -> PhaseReport:
    """Sum seconds, calls and counters of compatible reports. Order does not matter."""
    reports = [r for r in reports if r.metadata or r.leaf_seconds or any(r.counters.values())]
    if not reports:
        return PhaseReport()
    base = reports[0].metadata
    for r in reports[1:]:
        for key in _MERGE_KEYS:
            if r.metadata.get(key) != base.get(key):
                raise ValueError(f"cannot merge reports with different {key}: {base.get(key)!r} vs {r.metadata.get(key)!r}")
    out = PhaseReport(metadata={k: v for k, v in base.items() if k not in ("seed", "seeds")})
    seeds = set()
    for r in reports:
        for p in PhaseId:
            out.seconds[p.value] += r.seconds[p.value]
            out.calls[p.value] += r.calls[p.value]
        for k, v in r.counters.items():
            if k in ("critic_input_dim", "actor_params", "critic_params"):
                out.counters[k] = v  # per-run constants, not additive
            else:
                out.counters[k] = out.counters.get(k, 0) + v
        out.wall_seconds += r.wall_seconds
        out.enabled = out.enabled and r.enabled
        if "seeds" in r.metadata:
            seeds.update(r.metadata["seeds"])
        elif "seed" in r.metadata:
            seeds.add(r.metadata["seed"])
    out.metadata["seeds"] = sorted(seeds)
    out.metadata["merged_runs"] = sum(r.metadata.get("merged_runs", 1) for r in reports)
    return out
