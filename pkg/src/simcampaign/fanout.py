"""Fan-out: materialize per-instance copies of the simulation template.

Each instance gets a private working directory, a unique TCP port written
into its world file, a virtual display number, and a fully rendered launch
command. Ports repeat across sequential jobs (instance_id mod
instances_per_job indexes the ladder) because only one job's worth of
instances is ever alive at once.
"""

from __future__ import annotations

import json
import re
import shutil
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Iterable

from .manifest import MAX_PORT, Manifest

PLAN_FILENAME = "plan.json"
PORT_PLACEHOLDER = "{{PORT}}"

HEADLESS_COMMAND_TEMPLATE = (
    "xvfb-run -a -n {display} singularity exec {image} "
    "webots --batch --mode=fast {workdir}/{world_file}"
)
GUI_COMMAND_TEMPLATE = "singularity exec {image} webots {workdir}/{world_file}"

# A rewritable port token is either the literal placeholder or a line of
# the form "<ws> port <ws> <integer>", as hand-edited world files carry.
_PORT_LINE = re.compile(r"^[ \t]*port[ \t]+(\d+)[ \t]*\r?$", re.MULTILINE)


class PortRangeError(ValueError):
    """A port ladder would climb past the last valid TCP port."""


class PortTokenError(ValueError):
    """Base class for port-token rewrite problems."""


class PortTokenNotFoundError(PortTokenError):
    pass


class MultiplePortTokensError(PortTokenError):
    pass


@dataclass(frozen=True)
class InstancePlan:
    """One fanned-out instance: identity, resources, and launch command."""

    instance_id: int
    port: int
    display: int
    workdir: str
    command: str


def port_ladder(base_port: int, stride: int, n: int) -> list[int]:
    """Ports for n concurrent instances: base_port, base_port+stride, ...

    Raises PortRangeError if the top rung would exceed 65535.
    """
    if n < 1:
        raise ValueError(f"n must be at least 1 (got {n})")
    top = base_port + stride * (n - 1)
    if top > MAX_PORT:
        raise PortRangeError(
            f"port ladder overflows: {base_port} + {stride} * {n - 1} = {top} exceeds {MAX_PORT}"
        )
    return [base_port + stride * i for i in range(n)]


def display_ladder(start: int, occupied: Iterable[int], n: int) -> list[int]:
    """The n smallest display numbers >= start not already occupied."""
    if n < 1:
        raise ValueError(f"n must be at least 1 (got {n})")
    taken = set(occupied)
    out: list[int] = []
    candidate = start
    while len(out) < n:
        if candidate not in taken:
            out.append(candidate)
        candidate += 1
    return out


def _port_tokens(text: str) -> list[tuple[int, int, str]]:
    """Spans of every rewritable token as (start, end, kind), in text order."""
    spans = [(m.start(), m.end(), "placeholder") for m in re.finditer(re.escape(PORT_PLACEHOLDER), text)]
    spans += [(m.start(1), m.end(1), "port-line") for m in _PORT_LINE.finditer(text)]
    return sorted(spans)


def _single_token(text: str) -> tuple[int, int, str]:
    tokens = _port_tokens(text)
    if not tokens:
        raise PortTokenNotFoundError(
            f"no port token found (expected the {PORT_PLACEHOLDER} placeholder or a 'port <integer>' line)"
        )
    if len(tokens) > 1:
        raise MultiplePortTokensError(f"{len(tokens)} port tokens found; refusing ambiguous rewrite")
    return tokens[0]


def rewrite_port(world_text: str, port: int) -> str:
    """Replace the single port token in world_text with the given port.

    Every other byte is preserved. Refuses texts with zero or multiple
    tokens rather than silently corrupting unrelated fields.
    """
    start, end, _kind = _single_token(world_text)
    return world_text[:start] + str(port) + world_text[end:]


def extract_port(world_text: str) -> int:
    """Read back the port from a rewritten world file's single token."""
    start, end, kind = _single_token(world_text)
    if kind == "placeholder":
        raise PortTokenNotFoundError("port token is an unsubstituted placeholder; no port value present")
    return int(world_text[start:end])


def render_command(p: InstancePlan, m: Manifest) -> str:
    """Render the launch command line for one instance.

    Headless commands pin the virtual display with -n; the port never
    appears on the command line (it lives in the rewritten world file).
    A manifest command_template overrides the built-in templates and may
    use the {image} {workdir} {world_file} {display} {mode} placeholders.
    """
    if m.command_template is not None:
        template = m.command_template
    elif m.mode == "gui":
        template = GUI_COMMAND_TEMPLATE
    else:
        template = HEADLESS_COMMAND_TEMPLATE
    try:
        return template.format(
            image=m.container_image,
            workdir=p.workdir,
            world_file=m.world_file,
            display=p.display,
            mode=m.mode,
        )
    except (KeyError, IndexError) as exc:
        raise ValueError(f"unknown placeholder in command_template: {exc}") from exc


def plan_instances(m: Manifest, n: int, occupied_displays: Iterable[int] = ()) -> list[InstancePlan]:
    """Compute the n instance plans without touching the filesystem.

    Deterministic: the same manifest and n always yield the same plans.
    """
    if n < 1:
        raise ValueError(f"n must be at least 1 (got {n})")
    per_job = m.instances_per_job()
    ladder = port_ladder(m.base_port, m.port_stride, min(n, per_job))
    displays = display_ladder(m.display_start, occupied_displays, n)
    output_root = Path(m.output_dir).absolute()

    plans = []
    for i in range(n):
        plan = InstancePlan(
            instance_id=i,
            port=ladder[i % per_job],
            display=displays[i],
            workdir=str(output_root / f"instance_{i:04d}"),
            command="",
        )
        plans.append(replace(plan, command=render_command(plan, m)))
    return plans


def fan_out(m: Manifest, n: int, occupied_displays: Iterable[int] = ()) -> list[InstancePlan]:
    """Materialize n instance copies of the template under output_dir.

    Each instance directory is a byte-identical copy of template_dir except
    the world file, which gets the instance's ladder port. Re-running
    replaces existing instance directories. Writes the plan index to
    {output_dir}/plan.json and returns the plans.
    """
    template = Path(m.template_dir)
    if not template.is_dir():
        raise FileNotFoundError(f"template_dir does not exist: {template}")
    if not (template / m.world_file).is_file():
        raise FileNotFoundError(f"world_file not found under template_dir: {template / m.world_file}")

    plans = plan_instances(m, n, occupied_displays)
    output_root = Path(m.output_dir).absolute()
    output_root.mkdir(parents=True, exist_ok=True)

    for plan in plans:
        workdir = Path(plan.workdir)
        if workdir.exists():
            shutil.rmtree(workdir)
        shutil.copytree(template, workdir)
        world_path = workdir / m.world_file
        text = world_path.read_text(encoding="utf-8")
        try:
            rewritten = rewrite_port(text, plan.port)
        except PortTokenError as exc:
            raise type(exc)(f"instance {plan.instance_id}: {exc}") from exc
        world_path.write_text(rewritten, encoding="utf-8")

    write_plan_index(plans, output_root / PLAN_FILENAME)
    return plans


def write_plan_index(plans: list[InstancePlan], path: str | Path) -> None:
    """Persist the plan index: one JSON object per instance."""
    Path(path).write_text(json.dumps([asdict(p) for p in plans], indent=2) + "\n", encoding="utf-8")


def load_plan_index(path: str | Path) -> list[InstancePlan]:
    """Read a plan index written by write_plan_index."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    return [InstancePlan(**entry) for entry in raw]
