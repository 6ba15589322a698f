"""Distribution planning and PBS job-array script emission.

Instances are packed into jobs of nodes*slots and dealt round-robin across
nodes within each job, so per-node loads never differ by more than one.
The emitted script is plain PBS Professional: one array element per job,
each element backgrounding its slice of the command list and waiting.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

from .fanout import InstancePlan, plan_instances
from .manifest import Manifest, NodeProfile

JOB_SCRIPT_FILENAME = "job.pbs"
COMMANDS_FILENAME = "commands.txt"


class Assignment(NamedTuple):
    instance_id: int
    job_index: int
    node_index: int
    slot_index: int


@dataclass(frozen=True)
class DistributionPlan:
    """Deterministic placement of every instance onto (job, node, slot)."""

    assignments: list[Assignment]
    jobs: int

    def for_job(self, job_index: int) -> list[Assignment]:
        return [a for a in self.assignments if a.job_index == job_index]


@dataclass(frozen=True)
class JobArraySpec:
    """Everything render_pbs needs to emit a submission script."""

    campaign_name: str
    jobs: int
    nodes: int
    node_profile: NodeProfile
    walltime_minutes: int
    queue: str
    launch_command_file: str
    instances_per_job: int


def plan_distribution(total_runs: int, nodes: int, slots: int) -> DistributionPlan:
    """Assign each instance to a (job, node, slot) triple.

    Instance i lands in job i // (nodes*slots); within the job the
    remainder r is dealt round-robin: node r % nodes, slot r // nodes.
    """
    for name, value in (("total_runs", total_runs), ("nodes", nodes), ("slots", slots)):
        if value < 1:
            raise ValueError(f"{name} must be at least 1 (got {value})")
    per_job = nodes * slots
    jobs = -(-total_runs // per_job)
    assignments = []
    for i in range(total_runs):
        r = i % per_job
        assignments.append(Assignment(i, i // per_job, r % nodes, r // nodes))
    return DistributionPlan(assignments=assignments, jobs=jobs)


def walltime_hms(minutes: int) -> str:
    """Integer minutes rendered as HH:MM:SS for the scheduler directive."""
    return f"{minutes // 60:02d}:{minutes % 60:02d}:00"


def render_pbs(spec: JobArraySpec) -> str:
    """Emit the job-array submission script as text.

    Byte-stable for a given spec. The -J directive is omitted for a
    single-job campaign. Each array element slices its own lines out of
    the command file, backgrounds them, and waits for all to finish.
    """
    profile = spec.node_profile
    lines = [
        "#!/bin/bash",
        f"#PBS -N {spec.campaign_name}",
        f"#PBS -q {spec.queue}",
        f"#PBS -l select={spec.nodes}:ncpus={profile.cores}:mem={profile.ram_gb}gb",
        f"#PBS -l walltime={walltime_hms(spec.walltime_minutes)}",
    ]
    if spec.jobs > 1:
        lines.append(f"#PBS -J 0-{spec.jobs - 1}")
    lines += [
        "",
        "set -u",
        "",
        'JOB_INDEX="${PBS_ARRAY_INDEX:-0}"',
        f'COMMAND_FILE="{spec.launch_command_file}"',
        f"PER_JOB={spec.instances_per_job}",
        "FIRST=$(( JOB_INDEX * PER_JOB + 1 ))",
        "LAST=$(( FIRST + PER_JOB - 1 ))",
        "",
        'mapfile -t COMMANDS < <(sed -n "${FIRST},${LAST}p" "$COMMAND_FILE")',
        'for cmd in "${COMMANDS[@]}"; do',
        '    eval "$cmd" &',
        "done",
        "wait",
        "",
    ]
    return "\n".join(lines)


def make_job_array_spec(m: Manifest, launch_command_file: str | Path) -> JobArraySpec:
    """Derive the array spec for a manifest's full campaign."""
    plan = plan_distribution(m.total_runs, m.nodes, m.slots_per_node)
    return JobArraySpec(
        campaign_name=m.campaign_name,
        jobs=plan.jobs,
        nodes=m.nodes,
        node_profile=m.node_profile,
        walltime_minutes=m.walltime_minutes,
        queue=m.queue,
        launch_command_file=str(launch_command_file),
        instances_per_job=m.instances_per_job(),
    )


def write_command_file(plans: list[InstancePlan], path: str | Path) -> None:
    """One rendered command per line; 1-based line N holds instance N-1."""
    ordered = sorted(plans, key=lambda p: p.instance_id)
    Path(path).write_text("".join(p.command + "\n" for p in ordered), encoding="utf-8")


def write_job_script(m: Manifest, output_dir: str | Path | None = None) -> tuple[Path, Path]:
    """Write commands.txt and job.pbs for the campaign; returns both paths."""
    root = Path(output_dir if output_dir is not None else m.output_dir).absolute()
    root.mkdir(parents=True, exist_ok=True)
    plans = plan_instances(m, m.total_runs)
    commands_path = root / COMMANDS_FILENAME
    write_command_file(plans, commands_path)
    spec = make_job_array_spec(m, commands_path)
    script_path = root / JOB_SCRIPT_FILENAME
    script_path.write_text(render_pbs(spec), encoding="utf-8")
    return script_path, commands_path
