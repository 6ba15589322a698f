"""Throughput modeling, speedup ratios, and setup comparisons.

The throughput law is nodes * slots * floor(t / walltime): every walltime
window completes one job's worth of instances. The single-machine baseline
series is measured reference data shipped with the package, never modeled.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Sequence

from .collector import MB_PER_GB, ResourceSummary

BASELINE_RESOURCE = "pc_baseline.json"
COMPARISON_RESOURCE = "setup_comparison.json"
REPORT_FILENAME = "evaluation.json"

_DELTA_FIELDS = (
    ("walltime", "mean_walltime_s"),
    ("cpu_time", "mean_cpu_time_s"),
    ("ram", "mean_peak_ram_mb"),
    ("cpu_percent", "mean_cpu_percent"),
)


@dataclass(frozen=True)
class ThroughputConfig:
    """Cluster shape the throughput law runs over."""

    nodes: int
    slots: int
    walltime_minutes: int


@dataclass(frozen=True)
class ComparisonDeltas:
    """Signed percent differences, serial relative to parallel.

    Negative means the serial setup's mean is smaller.
    """

    walltime_pct: float
    cpu_time_pct: float
    ram_pct: float
    cpu_percent_pct: float


@dataclass(frozen=True)
class EvaluationReport:
    series: tuple[tuple[float, int], ...]
    baseline_series: tuple[tuple[float, int], ...]
    speedup: float
    deltas: ComparisonDeltas | None = None


def _check_config(cfg: ThroughputConfig) -> None:
    for name in ("nodes", "slots", "walltime_minutes"):
        if getattr(cfg, name) < 1:
            raise ValueError(f"{name} must be at least 1 (got {getattr(cfg, name)})")


def throughput(t_minutes: float, cfg: ThroughputConfig) -> int:
    """Completed runs after t minutes: nodes * slots * floor(t / walltime)."""
    _check_config(cfg)
    if t_minutes < 0:
        raise ValueError(f"t_minutes must be nonnegative (got {t_minutes})")
    return cfg.nodes * cfg.slots * int(t_minutes // cfg.walltime_minutes)


def throughput_series(timestamps: Sequence[float], cfg: ThroughputConfig) -> list[tuple[float, int]]:
    """Pointwise throughput at each timestamp, order preserved."""
    return [(t, throughput(t, cfg)) for t in timestamps]


def speedup(runs_a: int, runs_b: int) -> float:
    """How many times more runs a produced than b."""
    if runs_b == 0:
        raise ZeroDivisionError("speedup is undefined for a zero-run baseline")
    return runs_a / runs_b


def predict_scaling(
    new_nodes: int,
    cfg: ThroughputConfig,
    t_minutes: float,
    baseline_runs: int,
) -> tuple[int, float]:
    """Throughput and speedup if the campaign ran on new_nodes nodes."""
    predicted = throughput(t_minutes, replace(cfg, nodes=new_nodes))
    return predicted, speedup(predicted, baseline_runs)


def compare_configs(serial: ResourceSummary, parallel: ResourceSummary) -> ComparisonDeltas:
    """Percent deltas of the serial setup's means relative to the parallel setup's.

    Each delta is (serial - parallel) / parallel * 100. Both summaries must
    have at least one sample for every compared field.
    """
    deltas = {}
    for key, attr in _DELTA_FIELDS:
        s = getattr(serial, attr)
        p = getattr(parallel, attr)
        if serial.samples.get(key, 0) < 1 or parallel.samples.get(key, 0) < 1 or s is None or p is None:
            raise ValueError(f"cannot compare {key}: no samples on one side")
        if p == 0:
            raise ZeroDivisionError(f"parallel mean for {key} is zero")
        deltas[f"{key}_pct"] = (s - p) / p * 100.0
    return ComparisonDeltas(**deltas)


def _load_resource(name: str) -> dict:
    return json.loads(resources.files("simcampaign.data").joinpath(name).read_text(encoding="utf-8"))


def load_reference_baseline() -> list[tuple[float, int]]:
    """The bundled single-machine baseline series: (minutes, completed runs)."""
    raw = _load_resource(BASELINE_RESOURCE)
    return list(zip(raw["timestamps_minutes"], raw["completed_runs"]))


def _summary_from_reference(entry: dict) -> ResourceSummary:
    return ResourceSummary(
        mean_walltime_s=entry["mean_walltime_s"],
        mean_cpu_time_s=entry["mean_cpu_time_s"],
        mean_peak_ram_mb=entry["mean_peak_ram_gb"] * MB_PER_GB,
        mean_cpu_percent=entry["mean_cpu_percent"],
        samples={"walltime": 1, "cpu_time": 1, "ram": 1, "cpu_percent": 1},
    )


def load_reference_comparison() -> tuple[ResourceSummary, ResourceSummary]:
    """The bundled (serial, parallel) per-run resource means."""
    raw = _load_resource(COMPARISON_RESOURCE)
    return _summary_from_reference(raw["serial"]), _summary_from_reference(raw["parallel"])


def build_report(
    cfg: ThroughputConfig,
    baseline_series: Sequence[tuple[float, int]] | None = None,
    deltas: ComparisonDeltas | None = None,
) -> EvaluationReport:
    """Model the campaign's throughput over the baseline's timestamps.

    The headline speedup compares final completed-run counts.
    """
    baseline = list(baseline_series) if baseline_series is not None else load_reference_baseline()
    if not baseline:
        raise ValueError("baseline series is empty")
    series = throughput_series([t for t, _ in baseline], cfg)
    ratio = speedup(series[-1][1], baseline[-1][1])
    return EvaluationReport(
        series=tuple(series),
        baseline_series=tuple(baseline),
        speedup=ratio,
        deltas=deltas,
    )


def format_table(report: EvaluationReport) -> str:
    """Plain-text throughput table: timestamp, baseline runs, modeled runs."""
    lines = [f"{'timestamp_min':>13}  {'baseline_runs':>13}  {'modeled_runs':>12}"]
    baseline = dict(report.baseline_series)
    for t, runs in report.series:
        base = baseline.get(t)
        base_text = str(base) if base is not None else "-"
        lines.append(f"{t:>13g}  {base_text:>13}  {runs:>12}")
    return "\n".join(lines)


def write_report(report: EvaluationReport, path: str | Path) -> None:
    """Write evaluation.json with the series, speedup, and deltas."""
    doc = {
        "series": [{"timestamp_minutes": t, "completed_runs": runs} for t, runs in report.series],
        "baseline_series": [
            {"timestamp_minutes": t, "completed_runs": runs} for t, runs in report.baseline_series
        ],
        "speedup": round(report.speedup, 2),
        "deltas": None
        if report.deltas is None
        else {
            "walltime_pct": round(report.deltas.walltime_pct, 2),
            "cpu_time_pct": round(report.deltas.cpu_time_pct, 2),
            "ram_pct": round(report.deltas.ram_pct, 2),
            "cpu_percent_pct": round(report.deltas.cpu_percent_pct, 2),
        },
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
