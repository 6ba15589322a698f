"""Aggregate per-instance outputs into one campaign dataset.

The merged CSV gains a leading instance_id column so per-run provenance
survives the merge. Failed and walltime-killed runs are skipped; a
succeeded run whose output file is missing is an integrity error that is
reported and excluded without stopping the collection.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

from .localexec import RunRecord, STATUS_SUCCEEDED

log = logging.getLogger(__name__)

MERGED_FILENAME = "merged.csv"
SUMMARY_FILENAME = "summary.json"
INSTANCE_OUTPUT_FILENAME = "out.csv"
MERGED_HEADER = "instance_id,run_id,step,value"
MB_PER_GB = 1024.0


@dataclass(frozen=True)
class AggregateDataset:
    """Result of merging a campaign's per-instance CSVs."""

    rows: int
    runs_included: int
    output_path: str
    integrity_errors: tuple[str, ...] = ()


@dataclass(frozen=True)
class ResourceSummary:
    """Arithmetic means of per-run resource consumption.

    samples counts how many records contributed to each mean; a mean with
    zero samples is None. mean_cpu_percent is 100 times the mean of the
    per-run cpu_time/walltime ratios (it exceeds 100 for multi-core runs).
    """

    mean_walltime_s: float | None
    mean_cpu_time_s: float | None
    mean_peak_ram_mb: float | None
    mean_cpu_percent: float | None
    samples: dict[str, int]


def collect(
    records: Iterable[RunRecord],
    workdirs: Mapping[int, str | Path],
    merged_path: str | Path,
) -> AggregateDataset:
    """Concatenate the data rows of every succeeded run into merged_path.

    The header is written once; each data row is prefixed with its
    instance_id. Deterministic: runs are merged in instance_id order, so
    re-running over the same inputs produces a byte-identical file.
    """
    merged_path = Path(merged_path)
    succeeded = sorted(
        (r for r in records if r.exit_status == STATUS_SUCCEEDED),
        key=lambda r: r.instance_id,
    )

    out_lines = [MERGED_HEADER]
    rows = 0
    included = 0
    errors: list[str] = []
    for rec in succeeded:
        workdir = workdirs.get(rec.instance_id)
        if workdir is None:
            errors.append(f"instance {rec.instance_id}: no workdir in plan index")
            continue
        csv_path = Path(workdir) / INSTANCE_OUTPUT_FILENAME
        if not csv_path.is_file():
            errors.append(f"instance {rec.instance_id}: succeeded but output missing: {csv_path}")
            continue
        lines = csv_path.read_text(encoding="utf-8").splitlines()
        for line in lines[1:]:  # first line is the per-run header
            if line:
                out_lines.append(f"{rec.instance_id},{line}")
                rows += 1
        included += 1

    merged_path.parent.mkdir(parents=True, exist_ok=True)
    merged_path.write_text("\n".join(out_lines) + "\n", encoding="utf-8")
    for message in errors:
        log.warning("collect: %s", message)
    return AggregateDataset(
        rows=rows,
        runs_included=included,
        output_path=str(merged_path),
        integrity_errors=tuple(errors),
    )


def completion_rate(records: list[RunRecord]) -> float:
    """Fraction of records that succeeded. Undefined for zero records."""
    if not records:
        raise ValueError("completion rate is undefined for zero records")
    succeeded = sum(1 for r in records if r.exit_status == STATUS_SUCCEEDED)
    return succeeded / len(records)


def resource_summary(records: list[RunRecord]) -> ResourceSummary:
    """Mean walltime, CPU time, peak RAM, and CPU percent across records.

    Records with an absent accounting field are excluded from that field's
    mean only; samples reports how many contributed to each.
    """
    walltimes = [r.walltime_s for r in records if r.walltime_s is not None]
    cpu_times = [r.cpu_time_s for r in records if r.cpu_time_s is not None]
    rams = [r.peak_ram_mb for r in records if r.peak_ram_mb is not None]
    ratios = [
        r.cpu_time_s / r.walltime_s
        for r in records
        if r.cpu_time_s is not None and r.walltime_s is not None and r.walltime_s > 0
    ]
    samples = {
        "walltime": len(walltimes),
        "cpu_time": len(cpu_times),
        "ram": len(rams),
        "cpu_percent": len(ratios),
    }
    if all(count == 0 for count in samples.values()):
        raise ValueError("no usable samples for fields: " + ", ".join(samples))

    def mean(values: list[float]) -> float | None:
        return sum(values) / len(values) if values else None

    ratio_mean = mean(ratios)
    return ResourceSummary(
        mean_walltime_s=mean(walltimes),
        mean_cpu_time_s=mean(cpu_times),
        mean_peak_ram_mb=mean(rams),
        mean_cpu_percent=100.0 * ratio_mean if ratio_mean is not None else None,
        samples=samples,
    )


def write_summary(
    path: str | Path,
    completion: float | None,
    summary: ResourceSummary | None,
) -> None:
    """Write summary.json: completion rate plus resource means (RAM also in GB)."""
    doc: dict = {"completion_rate": completion}
    if summary is not None:
        ram_gb = summary.mean_peak_ram_mb / MB_PER_GB if summary.mean_peak_ram_mb is not None else None
        doc.update(
            {
                "mean_walltime_s": summary.mean_walltime_s,
                "mean_cpu_time_s": summary.mean_cpu_time_s,
                "mean_peak_ram_mb": summary.mean_peak_ram_mb,
                "mean_peak_ram_gb": ram_gb,
                "mean_cpu_percent": summary.mean_cpu_percent,
                "samples": summary.samples,
            }
        )
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
