"""Training runs, agent-count sweeps, report rendering and reference comparison.

Every ``cmd_*`` function returns a process exit code: 0 on success, 1 for
invalid input, 2 for a runtime failure.
"""

from __future__ import annotations

import csv
import ctypes
import json
import logging
import os
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, TextIO

import numpy as np

from . import plotting, reference
from .algos import TrainerGroup, TrainingLog, run_episode_loop
from .checkpoint import save_checkpoint
from .config import ConfigError, RunConfig, SweepConfig
from .envs import ParticleEnv, space_dims
from .profiler import (
    PhaseId,
    PhaseReport,
    GrowthTable,
    breakdown,
    growth_rates,
    merge,
)
from .replay import BufferSet

log = logging.getLogger(__name__)

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2
REPORT_CSV_COLUMNS = ("run_id", "phase", "seconds", "percent", "N", "algorithm")

_M_TRIM_THRESHOLD = -1
_M_MMAP_THRESHOLD = -3


def stabilize_allocator() -> bool:
    """Stop glibc from returning freed batch-sized arrays to the OS.

    Otherwise every 1024-row temporary above the mmap threshold is re-faulted
    on each call, a fixed cost that swamps small-N timings. Returns False
    where mallopt is unavailable.
    """
    try:
        libc = ctypes.CDLL("libc.so.6")
        ok = libc.mallopt(_M_MMAP_THRESHOLD, 1 << 28) == 1
        return ok and libc.mallopt(_M_TRIM_THRESHOLD, 1 << 29) == 1
    except (OSError, AttributeError):
        return False


@dataclass
class RunResult:
    config: RunConfig
    report: PhaseReport
    log: TrainingLog
    group: TrainerGroup
    rngs: Dict[str, np.random.Generator]

    def rng_states(self) -> Dict[str, dict]:
        return {name: r.bit_generator.state for name, r in self.rngs.items()}


def run_metadata(config: RunConfig) -> Dict[str, object]:
    env_cfg = config.env_config()
    obs_dim, act_dim, critic_dim = space_dims(env_cfg)
    return {
        "n_agents": config.n_agents,
        "batch_size": config.algo_config().batch_size,
        "algorithm": config.algorithm,
        "scenario": config.scenario,
        "episodes": config.episodes,
        "seed": config.seed,
        "n_prey": env_cfg.n_prey,
        "n_landmarks": env_cfg.n_landmarks,
        "obs_dim": obs_dim,
        "critic_input_dim": critic_dim,
        "config": config.to_dict(),
        "platform": {"python": platform.python_version(), "numpy": np.__version__, "cpus": os.cpu_count()},
    }


def run_training(config: RunConfig) -> RunResult:
    """Build everything from ``config`` and train for ``config.episodes`` episodes."""
    if config.stable_allocator:
        stabilize_allocator()
    report = PhaseReport(enabled=config.profile, metadata=run_metadata(config))
    start = time.perf_counter()
    with report.scope(PhaseId.Other):
        env_cfg = config.env_config()
        algo_cfg = config.algo_config()
        init_ss, env_ss, train_ss = np.random.SeedSequence(config.seed).spawn(3)
        rngs = {
            "init": np.random.default_rng(init_ss),
            "env": np.random.default_rng(env_ss),
            "train": np.random.default_rng(train_ss),
        }
        obs_dim, act_dim, _ = space_dims(env_cfg)
        n = config.n_agents
        group = TrainerGroup([obs_dim] * n, act_dim, algo_cfg, rngs["init"])
        group.gather_workers = config.gather_workers
        env = ParticleEnv(env_cfg, rngs["env"])
        buffers = BufferSet([obs_dim] * n, act_dim, algo_cfg.buffer_capacity, algo_cfg.dtype, config.gather_mode)
    training_log = run_episode_loop(group, env, buffers, report, rngs["train"], config.episodes)
    report.wall_seconds = time.perf_counter() - start
    c = group.counters
    actor_params, critic_params = group.param_totals()
    report.counters.update(
        buffer_lookups=c.buffer_lookups,
        cross_agent_policy_reads=c.cross_agent_policy_reads,
        critic_input_dim=c.critic_input_dim,
        critic_backprops=c.critic_backprops,
        actor_backprops=c.actor_backprops,
        update_rounds=c.update_rounds,
        env_steps=c.env_steps,
        actor_params=actor_params,
        critic_params=critic_params,
    )
    return RunResult(config, report, training_log, group, rngs)


def write_rewards_csv(path: Path, training_log: TrainingLog) -> None:
    rewards = training_log.episode_rewards
    n = len(rewards[0]) if rewards else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["episode", *[f"agent{i}" for i in range(n)], "team"])
        for ep, row in enumerate(rewards):
            w.writerow([ep, *[repr(x) for x in row], repr(float(sum(row)))])


def write_run_outputs(result: RunResult, out_dir: Path, figures: bool = True) -> Dict[str, Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {"report": out_dir / "report.json", "rewards": out_dir / "rewards.csv"}
    paths["report"].write_text(json.dumps(result.report.to_dict(), indent=2, sort_keys=True))
    write_rewards_csv(paths["rewards"], result.log)
    if result.config.checkpoint:
        paths["checkpoint"] = out_dir / "checkpoint.ckpt"
        save_checkpoint(paths["checkpoint"], result.group, result.rng_states(),
                        {"config": result.config.to_dict()})
    if figures and result.log.episode_rewards:
        paths["reward_plot"] = plotting.plot_rewards(result.log.team_rewards(), out_dir / "rewards.png")
        if result.report.enabled and result.report.leaf_seconds > 0 and result.report.counters["update_rounds"]:
            paths["breakdown_plot"] = plotting.plot_breakdown([result.report], out_dir / "breakdown.png")
    return paths


def cmd_train(config: RunConfig, out_dir: str | Path, stream: Optional[TextIO] = None) -> int:
    stream = stream or sys.stdout
    try:
        result = run_training(config)
        write_run_outputs(result, Path(out_dir))
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001 - any component failure maps to exit 2
        log.debug("training failed", exc_info=True)
        print(f"error: training failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    rep = result.report
    print(f"trained {config.algorithm} on {config.scenario} with N={config.n_agents} "
          f"for {config.episodes} episodes in {rep.wall_seconds:.1f}s "
          f"({rep.counters['update_rounds']} update rounds)", file=stream)
    if rep.enabled and rep.counters["update_rounds"]:
        print(format_breakdown(rep), file=stream)
    return EXIT_OK


# -- sweeps ----------------------------------------------------------------


def _report_runner(config: RunConfig) -> PhaseReport:
    return run_training(config).report


@dataclass
class SweepPoint:
    n_agents: int
    reports: List[PhaseReport]
    merged: PhaseReport

    def mean_seconds(self, phase: str) -> float:
        return self.merged.phase_seconds(phase) / len(self.reports)

    def spread(self, phase: str):
        vals = [r.phase_seconds(phase) for r in self.reports]
        return min(vals), max(vals)


@dataclass
class SweepResult:
    points: List[SweepPoint]
    table: Optional[GrowthTable] = None
    comparison: List[dict] = field(default_factory=list)


def compare_to_reference(table: GrowthTable, rules: Dict[str, tuple] | None = None) -> List[dict]:
    """Direction verdict per (pair, phase). Never checks equality with the reference values."""
    rules = rules or reference.DIRECTION_RULES
    out = []
    for pair in table.pairs:
        if pair not in reference.PAIRS:
            raise ValueError(f"agent pair {pair} has no reference data (available: {', '.join(reference.PAIRS)})")
        for phase, (lo, hi) in rules.items():
            measured = table.ratios[pair].get(phase)
            ok = measured is not None and lo < measured and (measured <= hi)
            if hi == float("inf"):
                note = "superlinear growth observed" if ok else "superlinearity NOT observed"
                rule = f"> {lo}"
            else:
                ok = measured is not None and lo <= measured <= hi
                note = "~linear-per-agent growth observed" if ok else "~linear-per-agent growth NOT observed"
                rule = f"in [{lo}, {hi}]"
            out.append({
                "pair": pair,
                "phase": phase,
                "measured": measured,
                "reference": reference.growth_reference(phase, pair),
                "rule": rule,
                "verdict": "direction-match" if ok else "direction-mismatch",
                "note": note,
            })
    return out


def _point_rows(points: Sequence[SweepPoint]) -> List[dict]:
    rows = []
    for pt in points:
        rep = pt.merged
        c = rep.counters
        rounds = max(c.get("update_rounds", 0), 1)
        k = rep.metadata.get("batch_size")
        n = pt.n_agents
        base = {
            "N": n,
            "repetitions": len(pt.reports),
            "update_rounds_per_run": c.get("update_rounds", 0) // len(pt.reports),
            "buffer_lookups_per_round": c.get("buffer_lookups", 0) // rounds,
            "expected_N2K": n * n * k,
            "policy_reads_per_round": c.get("cross_agent_policy_reads", 0) // rounds,
            "expected_N_Nminus1": n * (n - 1),
            "critic_input_dim": c.get("critic_input_dim", 0),
        }
        if rep.enabled and rep.leaf_seconds > 0:
            shares = {name: pct for name, _, pct in breakdown(rep, "top_level")}
            if rep.phase_seconds("UpdateAllTrainers") > 0:
                shares.update({name: pct for name, _, pct in breakdown(rep, "update_detail")})
        else:
            shares = {}
        for phase in ("ActionSelection", "UpdateAllTrainers", "Other", "MiniBatchSampling",
                      "TargetQCalculation", "QLoss", "PLoss"):
            if phase == "Other":
                per_run = [r.seconds["ExperienceCollection"] + r.seconds["Other"] for r in pt.reports]
            elif phase == "PLoss":
                per_run = [r.seconds["PLoss"] + r.seconds["TargetUpdate"] for r in pt.reports]
            else:
                per_run = [r.phase_seconds(phase) for r in pt.reports]
            rows.append(dict(base, phase=phase, mean_seconds=float(np.mean(per_run)),
                             min_seconds=min(per_run), max_seconds=max(per_run),
                             percent=shares.get(phase, float("nan"))))
    return rows


def _write_csv(path: Path, rows: List[dict]) -> None:
    if not rows:
        path.write_text("")
        return
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)


def _write_sweep_outputs(result: SweepResult, out: Path, figures: bool = True) -> None:
    _write_csv(out / "sweep_points.csv", _point_rows(result.points))
    for pt in result.points:
        (out / "points" / f"N{pt.n_agents}_merged.json").write_text(json.dumps(pt.merged.to_dict(), indent=2, sort_keys=True))
    if result.table is None:
        return
    (out / "growth.json").write_text(json.dumps(result.table.to_dict(), indent=2))
    rows = []
    for pair, ratios in result.table.ratios.items():
        for phase, ratio in ratios.items():
            try:
                ref = reference.growth_reference(phase, pair)
            except KeyError:
                ref = float("nan")
            rows.append({"pair": pair, "phase": phase, "ratio": ratio, "reference": ref})
    _write_csv(out / "growth.csv", rows)
    (out / "comparison.json").write_text(json.dumps(result.comparison, indent=2))
    if figures:
        timed = [pt.merged for pt in result.points if pt.merged.enabled and pt.merged.phase_seconds("UpdateAllTrainers") > 0]
        if timed:
            plotting.plot_breakdown(timed, out / "breakdown.png")
        plotting.plot_growth(result.table, out / "growth.png", reference.reference_growth_table())


def run_sweep(sweep: SweepConfig, out_dir: str | Path,
              runner: Callable[[RunConfig], PhaseReport] | None = None,
              figures: bool = True) -> SweepResult:
    """Run every (N, repetition) point, then growth rates and the reference comparison.

    Each point's report is written as soon as it finishes, so a failure leaves
    the completed points on disk before the exception propagates.
    """
    runner = runner or _report_runner
    out = Path(out_dir)
    (out / "points").mkdir(parents=True, exist_ok=True)
    jobs = [(n, rep, sweep.base.with_agents(n).with_seed(sweep.base.seed + rep))
            for n in sweep.agent_counts for rep in range(sweep.repetitions)]
    by_n: Dict[int, List[PhaseReport]] = {n: [] for n in sweep.agent_counts}
    result = SweepResult([])

    def record(n: int, rep: int, report: PhaseReport) -> None:
        if sweep.parallel:
            report.metadata["contended"] = True
        by_n[n].append(report)
        path = out / "points" / f"N{n}_rep{rep}.json"
        path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True))
        log.info("sweep point N=%d rep=%d done (%.1fs)", n, rep, report.wall_seconds)

    try:
        if sweep.parallel:
            with ProcessPoolExecutor() as pool:
                futures = [(n, rep, pool.submit(runner, cfg)) for n, rep, cfg in jobs]
                for n, rep, fut in futures:
                    record(n, rep, fut.result())
        else:
            for n, rep, cfg in jobs:
                record(n, rep, runner(cfg))
    finally:
        result.points = [SweepPoint(n, reps, merge(reps)) for n, reps in by_n.items() if len(reps) == sweep.repetitions]
        complete = len(result.points) == len(sweep.agent_counts)
        if complete and all(pt.merged.leaf_seconds > 0 for pt in result.points):
            result.table = growth_rates([pt.merged for pt in result.points])
            try:
                result.comparison = compare_to_reference(result.table)
            except ValueError as exc:
                log.warning("no reference comparison: %s", exc)
        _write_sweep_outputs(result, out, figures)
    return result


def format_comparison(comparison: Sequence[dict]) -> str:
    lines = [f"{'pair':<7}{'phase':<20}{'measured':>10}{'ref':>8}  {'rule':<14}verdict"]
    for c in comparison:
        m = "n/a" if c["measured"] is None else f"{c['measured']:.2f}"
        lines.append(f"{c['pair']:<7}{c['phase']:<20}{m:>10}{c['reference']:>8.1f}  {c['rule']:<14}"
                     f"{c['verdict']} ({c['note']})")
    return "\n".join(lines)


def cmd_sweep(sweep: SweepConfig, out_dir: str | Path, runner=None, stream: Optional[TextIO] = None) -> int:
    stream = stream or sys.stdout
    try:
        result = run_sweep(sweep, out_dir, runner)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001
        log.debug("sweep failed", exc_info=True)
        print(f"error: sweep aborted, partial results kept in {out_dir}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for pt in result.points:
        if pt.merged.enabled and pt.merged.phase_seconds("UpdateAllTrainers") > 0:
            print(format_breakdown(pt.merged, title=f"N={pt.n_agents} (sum of {len(pt.reports)} runs)"), file=stream)
    if result.comparison:
        print(format_comparison(result.comparison), file=stream)
    return EXIT_OK


# -- reports ---------------------------------------------------------------


def load_report(path: str | Path) -> PhaseReport:
    try:
        return PhaseReport.from_dict(json.loads(Path(path).read_text()))
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"{path}: malformed report ({exc})") from None


def format_breakdown(report: PhaseReport, title: str | None = None) -> str:
    md = report.metadata
    lines = [title or f"{md.get('algorithm', '?')} / {md.get('scenario', '?')} / N={md.get('n_agents', '?')}"]
    for taxonomy in ("top_level", "update_detail"):
        try:
            rows = breakdown(report, taxonomy)
        except ValueError:
            continue
        lines.append(f"  [{taxonomy}]")
        for name, sec, pct in rows:
            lines.append(f"    {name:<22}{sec:>12.3f}s{pct:>8.2f}%")
    return "\n".join(lines)


def report_rows(reports: Dict[str, PhaseReport]) -> List[dict]:
    rows = []
    for run_id, rep in reports.items():
        for taxonomy in ("top_level", "update_detail"):
            try:
                entries = breakdown(rep, taxonomy)
            except ValueError:
                continue
            for name, sec, pct in entries:
                rows.append({"run_id": run_id, "phase": name, "seconds": sec, "percent": pct,
                             "N": rep.metadata.get("n_agents"), "algorithm": rep.metadata.get("algorithm")})
    return rows


def write_report_csv(path: str | Path, rows: List[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REPORT_CSV_COLUMNS)
        for r in rows:
            w.writerow([r["run_id"], r["phase"], repr(float(r["seconds"])), repr(float(r["percent"])), r["N"], r["algorithm"]])


def load_report_csv(path: str | Path) -> List[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != REPORT_CSV_COLUMNS:
            raise ValueError(f"{path}: unexpected columns {reader.fieldnames}")
        return [{"run_id": r["run_id"], "phase": r["phase"], "seconds": float(r["seconds"]),
                 "percent": float(r["percent"]), "N": int(r["N"]) if r["N"] else None, "algorithm": r["algorithm"]}
                for r in reader]


def cmd_report(paths: Sequence[str | Path], csv_path: str | Path | None = None,
               figure_path: str | Path | None = None, stream: Optional[TextIO] = None) -> int:
    stream = stream or sys.stdout
    if not paths:
        print("error: no report files given", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        reports = {str(p): load_report(p) for p in paths}
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    for run_id, rep in reports.items():
        print(format_breakdown(rep, title=f"{run_id}: {rep.metadata.get('algorithm')} N={rep.metadata.get('n_agents')}"),
              file=stream)
    if len(reports) > 1:
        try:
            merged = merge(list(reports.values()))
        except ValueError:
            merged = None
        if merged is not None:
            print(format_breakdown(merged, title=f"merged ({len(reports)} runs)"), file=stream)
    if csv_path:
        write_report_csv(csv_path, report_rows(reports))
    if figure_path:
        timed = [r for r in reports.values() if r.phase_seconds("UpdateAllTrainers") > 0]
        if timed:
            plotting.plot_breakdown(sorted(timed, key=lambda r: r.metadata.get("n_agents", 0)), figure_path)
    return EXIT_OK


def cmd_compare(growth_path: str | Path, stream: Optional[TextIO] = None) -> int:
    stream = stream or sys.stdout
    try:
        table = GrowthTable.from_dict(json.loads(Path(growth_path).read_text()))
        comparison = compare_to_reference(table)
    except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    print(format_comparison(comparison), file=stream)
    return EXIT_OK
