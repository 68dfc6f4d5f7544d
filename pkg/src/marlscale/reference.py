"""Published reference trends for predator-prey training at 3 to 48 agents.

Values are read off the published figures (GPU testbed, 60K episodes). They
are comparison data only: absolute numbers are hardware-bound, so the
harness checks direction and dominance, never equality.
"""

from __future__ import annotations

from typing import Dict, Tuple

PAIRS = ("3-6", "6-12", "12-24", "24-48")
AGENT_COUNTS = (3, 6, 12, 24, 48)

# Per-doubling growth of update sub-phases, averaged over MADDPG/MATD3/MASAC.
SUBPHASE_GROWTH: Dict[str, Tuple[float, ...]] = {
    "MiniBatchSampling": (3.5, 3.7, 4.0, 4.2),
    "TargetQCalculation": (3.8, 4.2, 4.5, 4.7),
    "QPLoss": (2.6, 3.2, 3.4, 3.7),
}

# Per-doubling growth of top-level modules, averaged over the three algorithms.
MODULE_GROWTH: Dict[str, Tuple[float, ...]] = {
    "ActionSelection": (2.0, 2.0, 2.0, 2.1),
    "UpdateAllTrainers": (3.3, 3.7, 4.0, 4.3),
    "Total": (2.8, 3.2, 3.4, 3.9),
}

# Top-level training-time shares (%) per N: (ActionSelection, UpdateAllTrainers, Other).
TOP_LEVEL_SHARES: Dict[str, Dict[int, Tuple[float, float, float]]] = {
    "maddpg": {3: (62, 34, 4), 6: (50, 46.3, 3.7), 12: (35.64, 61.29, 3), 24: (22, 75.72, 2), 48: (12, 87, 1)},
    "matd3": {3: (61.62, 37.20, 1.12), 6: (49.97, 48.96, 1), 12: (36, 63, 1), 24: (21, 78, 1), 48: (10, 90, 0)},
    "masac": {3: (63, 34, 3), 6: (55, 42, 3), 12: (45, 53, 2), 24: (31, 68, 1), 48: (17, 82, 1)},
}

# Shares (%) within UpdateAllTrainers per N: (MiniBatchSampling, TargetQ, QLoss, PLoss).
UPDATE_DETAIL_SHARES: Dict[str, Dict[int, Tuple[float, float, float, float]]] = {
    "maddpg": {3: (59.08, 17.69, 10.69, 12.08), 6: (64, 19, 9, 8), 12: (65, 21, 8, 6), 24: (65, 23, 6, 6), 48: (64, 24, 6, 6)},
    "matd3": {3: (56, 18, 15, 11), 6: (60, 20, 12, 8), 12: (61, 22, 10, 7), 24: (61, 24, 9, 6), 48: (61, 25, 9, 5)},
    "masac": {3: (58, 19, 12, 11), 6: (62, 21, 10, 7), 12: (63, 23, 8, 6), 24: (63, 24, 7, 6), 48: (62, 25, 7, 6)},
}

# Total training seconds and UpdateAllTrainers seconds per N.
TOTAL_SECONDS = {
    "maddpg": {3: 3366, 6: 8505, 12: 23406, 24: 82768, 48: 326782},
    "matd3": {3: 3833, 6: 9399, 12: 26890, 24: 89002, 48: 353687},
    "masac": {3: 4335, 6: 11580, 12: 31787, 24: 101655, 48: 474027},
}
UPDATE_SECONDS = {
    "maddpg": {3: 1144, 6: 3912, 12: 14278, 24: 62904, 48: 284299},
    "matd3": {3: 1418, 6: 4606, 12: 16941, 24: 69422, 48: 318319},
    "masac": {3: 1474, 6: 4865, 12: 16848, 24: 69127, 48: 388700},
}

# Average split within UpdateAllTrainers across workloads (%).
AVERAGE_UPDATE_SPLIT = {"MiniBatchSampling": 61, "TargetQCalculation": 21, "QLoss": 10, "PLoss": 8}

# Direction rules used for the pass/fail verdicts: phase -> (lower, upper) on the per-doubling ratio.
DIRECTION_RULES: Dict[str, Tuple[float, float]] = {
    "MiniBatchSampling": (3.0, float("inf")),
    "TargetQCalculation": (3.0, float("inf")),
    "QPLoss": (2.0, float("inf")),
    "ActionSelection": (1.5, 3.0),
}


def growth_reference(phase: str, pair: str) -> float:
    table = SUBPHASE_GROWTH if phase in SUBPHASE_GROWTH else MODULE_GROWTH
    if phase not in table:
        raise KeyError(f"no reference growth for phase {phase!r}")
    if pair not in PAIRS:
        raise KeyError(f"no reference growth for agent pair {pair!r}")
    return table[phase][PAIRS.index(pair)]


def reference_growth_table() -> Dict[str, Dict[str, float]]:
    """Reference ratios laid out like :attr:`GrowthTable.ratios`."""
    out: Dict[str, Dict[str, float]] = {}
    for k, pair in enumerate(PAIRS):
        row = {phase: vals[k] for phase, vals in SUBPHASE_GROWTH.items()}
        row.update({phase: vals[k] for phase, vals in MODULE_GROWTH.items()})
        out[pair] = row
    return out
