"""Local campaign execution: emulate the cluster on one machine.

One supervisor walks the distribution plan job by job (job i+1 starts only
after every instance of job i has ended), keeping at most nodes*slots
children alive overall and at most slots per emulated node. Each child runs
in its instance workdir with SIM_PORT/SIM_DISPLAY/SIM_OUTPUT set, gets the
manifest walltime enforced individually (polite terminate, short grace,
then a hard kill), and leaves one record in the append-only record stream.
"""

from __future__ import annotations

import json
import logging
import os
import shlex
import subprocess
import time
from collections import Counter
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable

from .fanout import InstancePlan
from .manifest import Manifest
from .scheduler import Assignment, DistributionPlan
from .simstub import HEARTBEAT_FILENAME

log = logging.getLogger(__name__)

RECORDS_FILENAME = "records.jsonl"
STDOUT_FILENAME = "stdout.log"
STDERR_FILENAME = "stderr.log"

# Exit code recorded when the command cannot be spawned at all.
SPAWN_FAILURE_CODE = 127
GRACE_SECONDS = 5.0
POLL_SECONDS = 0.05

STATUS_SUCCEEDED = "succeeded"
STATUS_FAILED = "failed"
STATUS_KILLED = "killed_walltime"


@dataclass(frozen=True)
class RunRecord:
    """Outcome of one instance execution."""

    instance_id: int
    job_index: int
    node_index: int
    slot_index: int
    started_at: int  # ms since epoch
    ended_at: int  # ms since epoch
    exit_status: str  # succeeded | failed | killed_walltime
    exit_code: int | None
    walltime_s: float
    cpu_time_s: float | None
    peak_ram_mb: float | None


@dataclass(frozen=True)
class StatusSummary:
    """Partition of total_runs by current state."""

    pending: int
    running: int
    succeeded: int
    failed: int
    killed: int


@dataclass
class _Child:
    assignment: Assignment
    proc: subprocess.Popen
    started_at: int
    term_sent: float | None = None
    kill_sent: float | None = None
    walltime_killed: bool = False


def _now_ms() -> int:
    return int(time.time() * 1000)


def _append_line(path: Path, obj: dict) -> None:
    with path.open("a", encoding="utf-8") as fh:
        fh.write(json.dumps(obj) + "\n")


def _spawn(assignment: Assignment, instance: InstancePlan, m: Manifest) -> subprocess.Popen:
    workdir = Path(instance.workdir)
    env = dict(os.environ)
    env["SIM_PORT"] = str(instance.port)
    env["SIM_DISPLAY"] = str(instance.display)
    env["SIM_OUTPUT"] = str(workdir / "out.csv")
    argv = shlex.split(instance.command)
    with open(workdir / STDOUT_FILENAME, "wb") as out, open(workdir / STDERR_FILENAME, "wb") as err:
        return subprocess.Popen(argv, cwd=workdir, env=env, stdout=out, stderr=err)


def _reap(child: _Child) -> tuple[int, float | None, float | None] | None:
    """Collect the child if it has exited; returns (code, cpu_s, ram_mb)."""
    try:
        pid, status, rusage = os.wait4(child.proc.pid, os.WNOHANG)
    except ChildProcessError:
        # Something else reaped it; no accounting available.
        return child.proc.returncode if child.proc.returncode is not None else -1, None, None
    if pid == 0:
        return None
    code = os.waitstatus_to_exitcode(status)
    child.proc.returncode = code  # reaped here; keep Popen consistent
    cpu = rusage.ru_utime + rusage.ru_stime
    ram_mb = rusage.ru_maxrss / 1024.0  # Linux reports KB
    return code, cpu, ram_mb


def _run_single_job(
    members: list[Assignment],
    instances: dict[int, InstancePlan],
    m: Manifest,
    walltime_s: float,
    records_path: Path,
) -> list[RunRecord]:
    pending = sorted(members)
    running: list[_Child] = []
    node_load: Counter = Counter()
    total_limit = m.nodes * m.slots_per_node
    records: list[RunRecord] = []

    def finish(child: _Child, code: int, cpu: float | None, ram: float | None) -> None:
        ended = _now_ms()
        if child.walltime_killed:
            exit_status = STATUS_KILLED
        elif code == 0:
            exit_status = STATUS_SUCCEEDED
        else:
            exit_status = STATUS_FAILED
        rec = RunRecord(
            instance_id=child.assignment.instance_id,
            job_index=child.assignment.job_index,
            node_index=child.assignment.node_index,
            slot_index=child.assignment.slot_index,
            started_at=child.started_at,
            ended_at=ended,
            exit_status=exit_status,
            exit_code=code,
            walltime_s=(ended - child.started_at) / 1000.0,
            cpu_time_s=cpu,
            peak_ram_mb=ram,
        )
        records.append(rec)
        _append_line(records_path, asdict(rec))
        running.remove(child)
        node_load[child.assignment.node_index] -= 1

    while pending or running:
        # Launch everything that fits under the total and per-node limits.
        while pending and len(running) < total_limit:
            pick = next((a for a in pending if node_load[a.node_index] < m.slots_per_node), None)
            if pick is None:
                break
            pending.remove(pick)
            instance = instances[pick.instance_id]
            started = _now_ms()
            try:
                proc = _spawn(pick, instance, m)
            except OSError as exc:
                log.warning("instance %d: spawn failed: %s", pick.instance_id, exc)
                rec = RunRecord(
                    instance_id=pick.instance_id,
                    job_index=pick.job_index,
                    node_index=pick.node_index,
                    slot_index=pick.slot_index,
                    started_at=started,
                    ended_at=started,
                    exit_status=STATUS_FAILED,
                    exit_code=SPAWN_FAILURE_CODE,
                    walltime_s=0.0,
                    cpu_time_s=None,
                    peak_ram_mb=None,
                )
                records.append(rec)
                _append_line(records_path, asdict(rec))
                continue
            _append_line(
                records_path,
                {
                    "instance_id": pick.instance_id,
                    "job_index": pick.job_index,
                    "node_index": pick.node_index,
                    "slot_index": pick.slot_index,
                    "started_at": started,
                },
            )
            running.append(_Child(assignment=pick, proc=proc, started_at=started))
            node_load[pick.node_index] += 1

        if not running:
            continue
        time.sleep(POLL_SECONDS)

        for child in list(running):
            reaped = _reap(child)
            if reaped is not None:
                finish(child, *reaped)
                continue
            elapsed = (_now_ms() - child.started_at) / 1000.0
            if elapsed >= walltime_s and child.term_sent is None:
                log.info("instance %d exceeded walltime; terminating", child.assignment.instance_id)
                child.walltime_killed = True
                child.term_sent = time.monotonic()
                child.proc.terminate()
            elif child.term_sent is not None and child.kill_sent is None:
                if time.monotonic() - child.term_sent >= GRACE_SECONDS:
                    child.kill_sent = time.monotonic()
                    child.proc.kill()

    return records


def run_job_array(
    plan: DistributionPlan,
    m: Manifest,
    instances: Iterable[InstancePlan],
    state_dir: str | Path | None = None,
) -> list[RunRecord]:
    """Execute every planned instance, one job at a time.

    Returns one RunRecord per instance, ordered by instance_id; the same
    records are appended to {state_dir}/records.jsonl as they complete
    (preceded by a start marker when the child launches). A spawn failure
    is recorded as failed with exit code 127 and does not abort the
    campaign. Any prior record stream is replaced.
    """
    state = Path(state_dir if state_dir is not None else m.output_dir)
    state.mkdir(parents=True, exist_ok=True)
    records_path = state / RECORDS_FILENAME
    records_path.write_text("", encoding="utf-8")

    by_id = {p.instance_id: p for p in instances}
    missing = [a.instance_id for a in plan.assignments if a.instance_id not in by_id]
    if missing:
        raise ValueError(f"no instance plan for ids: {missing[:5]}{'...' if len(missing) > 5 else ''}")

    walltime_s = m.walltime_minutes * 60.0
    records: list[RunRecord] = []
    for job_index in range(plan.jobs):
        members = plan.for_job(job_index)
        if not members:
            continue
        log.info("starting job %d with %d instances", job_index, len(members))
        records.extend(_run_single_job(members, by_id, m, walltime_s, records_path))
    return sorted(records, key=lambda r: r.instance_id)


def _record_from_dict(obj: dict) -> RunRecord:
    return RunRecord(
        instance_id=obj["instance_id"],
        job_index=obj["job_index"],
        node_index=obj["node_index"],
        slot_index=obj["slot_index"],
        started_at=obj["started_at"],
        ended_at=obj["ended_at"],
        exit_status=obj["exit_status"],
        exit_code=obj.get("exit_code"),
        walltime_s=obj["walltime_s"],
        cpu_time_s=obj.get("cpu_time_s"),
        peak_ram_mb=obj.get("peak_ram_mb"),
    )


def _scan_records(state_dir: str | Path) -> tuple[dict[int, dict], int]:
    """Latest stream entry per instance plus the count of unparseable lines."""
    path = Path(state_dir) / RECORDS_FILENAME
    latest: dict[int, dict] = {}
    unparsed = 0
    if not path.exists():
        return latest, unparsed
    for line in path.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError:
            unparsed += 1
            continue
        if not isinstance(obj, dict) or "instance_id" not in obj:
            unparsed += 1
            continue
        latest[obj["instance_id"]] = obj
    return latest, unparsed


def status(state_dir: str | Path, total_runs: int) -> StatusSummary:
    """Summarize the record stream, tolerating a campaign still in flight.

    Corrupt or missing state is reported (logged) rather than fatal; counts
    cover the parseable records and always partition total_runs.
    """
    latest, unparsed = _scan_records(state_dir)
    if unparsed:
        log.warning("%d unparseable lines in %s skipped", unparsed, Path(state_dir) / RECORDS_FILENAME)
    running = succeeded = failed = killed = 0
    for obj in latest.values():
        if "ended_at" not in obj:
            running += 1
        elif obj.get("exit_status") == STATUS_SUCCEEDED:
            succeeded += 1
        elif obj.get("exit_status") == STATUS_KILLED:
            killed += 1
        else:
            failed += 1
    pending = max(0, total_runs - len(latest))
    return StatusSummary(pending=pending, running=running, succeeded=succeeded, failed=failed, killed=killed)


def load_records(state_dir: str | Path) -> list[RunRecord]:
    """Completed records from the stream, one per instance, by instance_id."""
    latest, _ = _scan_records(state_dir)
    records = [_record_from_dict(obj) for obj in latest.values() if "ended_at" in obj]
    return sorted(records, key=lambda r: r.instance_id)


def read_heartbeats(workdirs: Iterable[str | Path]) -> list[tuple[int, int]]:
    """(start_ms, end_ms) intervals from stub heartbeat files.

    Workdirs without a complete heartbeat (instance never ran, or failed
    before its working interval) are skipped.
    """
    intervals = []
    for wd in workdirs:
        path = Path(wd) / HEARTBEAT_FILENAME
        if not path.exists():
            continue
        start = end = None
        for line in path.read_text(encoding="utf-8").splitlines():
            parts = line.split()
            if len(parts) == 2 and parts[0] == "start":
                start = int(parts[1])
            elif len(parts) == 2 and parts[0] == "end":
                end = int(parts[1])
        if start is not None and end is not None:
            intervals.append((start, end))
    return intervals


def max_overlap(intervals: Iterable[tuple[int, int]]) -> int:
    """Peak number of simultaneously open [start, end) intervals."""
    events: list[tuple[int, int]] = []
    for start, end in intervals:
        events.append((start, 1))
        events.append((end, -1))
    # Half-open intervals: an end at time t frees its slot before a start at t.
    events.sort(key=lambda e: (e[0], e[1]))
    peak = current = 0
    for _, delta in events:
        current += delta
        peak = max(peak, current)
    return peak
