"""Campaign manifest: the JSON document that drives every pipeline stage.

A manifest names the simulation template, how many instances to run, the
cluster shape to emulate, and the port/display ladder parameters. Parsing
fills defaults deterministically; validation returns every broken invariant
instead of stopping at the first.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

# Defaults mirror the reference deployment: six big-memory nodes running
# eight instances each, ports climbing by 7 from 8873, displays from 99.
DEFAULT_NODES = 6
DEFAULT_SLOTS_PER_NODE = 8
DEFAULT_BASE_PORT = 8873
DEFAULT_PORT_STRIDE = 7
DEFAULT_DISPLAY_START = 99
DEFAULT_WALLTIME_MINUTES = 15
DEFAULT_QUEUE = "dice"
DEFAULT_MODE = "headless"
DEFAULT_CONTAINER_IMAGE = "webots.sif"

MIN_PORT = 1024
MAX_PORT = 65535

MODES = ("headless", "gui")


class ManifestError(Exception):
    """Base class for manifest document problems."""


class ManifestSyntaxError(ManifestError):
    """The document is not well-formed JSON."""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class MissingFieldError(ManifestError):
    """A required field is absent."""

    def __init__(self, field_name: str):
        super().__init__(f"missing required field: {field_name}")
        self.field_name = field_name


class FieldTypeError(ManifestError):
    """A field is present but has the wrong kind of value."""

    def __init__(self, field_name: str, expected: str):
        super().__init__(f"field {field_name} must be {expected}")
        self.field_name = field_name


class UnknownFieldError(ManifestError):
    """The document carries a field no stage understands."""

    def __init__(self, field_name: str):
        super().__init__(f"unknown field: {field_name}")
        self.field_name = field_name


@dataclass(frozen=True)
class NodeProfile:
    """Per-node hardware request emitted into the job script."""

    cores: int = 40
    ram_gb: int = 744
    scratch_gb: int = 1843
    gpus: int = 2


@dataclass(frozen=True)
class Manifest:
    """One campaign definition.

    Required fields have no defaults; everything else falls back to the
    reference deployment values above.
    """

    campaign_name: str
    template_dir: str
    world_file: str
    total_runs: int
    output_dir: str
    nodes: int = DEFAULT_NODES
    slots_per_node: int = DEFAULT_SLOTS_PER_NODE
    base_port: int = DEFAULT_BASE_PORT
    port_stride: int = DEFAULT_PORT_STRIDE
    display_start: int = DEFAULT_DISPLAY_START
    walltime_minutes: int = DEFAULT_WALLTIME_MINUTES
    queue: str = DEFAULT_QUEUE
    node_profile: NodeProfile = field(default_factory=NodeProfile)
    mode: str = DEFAULT_MODE
    container_image: str = DEFAULT_CONTAINER_IMAGE
    command_template: str | None = None

    def instances_per_job(self) -> int:
        """Concurrent instances one job covers (nodes x slots)."""
        return self.nodes * self.slots_per_node


_REQUIRED_FIELDS = ("campaign_name", "template_dir", "world_file", "total_runs", "output_dir")

_STRING_FIELDS = (
    "campaign_name",
    "template_dir",
    "world_file",
    "output_dir",
    "queue",
    "mode",
    "container_image",
)

_INT_FIELDS = (
    "total_runs",
    "nodes",
    "slots_per_node",
    "base_port",
    "port_stride",
    "display_start",
    "walltime_minutes",
)

_PROFILE_FIELDS = ("cores", "ram_gb", "scratch_gb", "gpus")

_KNOWN_FIELDS = frozenset(_STRING_FIELDS) | frozenset(_INT_FIELDS) | {"node_profile", "command_template"}


def _expect_str(name: str, value) -> str:
    if not isinstance(value, str):
        raise FieldTypeError(name, "a string")
    return value


def _expect_int(name: str, value) -> int:
    # bool is an int subclass; a manifest saying "nodes": true is a mistake.
    if isinstance(value, bool) or not isinstance(value, int):
        raise FieldTypeError(name, "an integer")
    return value


def _parse_node_profile(value) -> NodeProfile:
    if not isinstance(value, dict):
        raise FieldTypeError("node_profile", "an object")
    for key in value:
        if key not in _PROFILE_FIELDS:
            raise UnknownFieldError(f"node_profile.{key}")
    kwargs = {k: _expect_int(f"node_profile.{k}", value[k]) for k in _PROFILE_FIELDS if k in value}
    return NodeProfile(**kwargs)


def parse_manifest(document: str) -> Manifest:
    """Parse a UTF-8 JSON manifest document.

    Absent optional fields take their defaults; required fields must be
    present. Raises :class:`ManifestSyntaxError` for malformed JSON (with
    line/column), :class:`MissingFieldError`, :class:`FieldTypeError`, or
    :class:`UnknownFieldError` as appropriate.
    """
    try:
        raw = json.loads(document)
    except json.JSONDecodeError as exc:
        raise ManifestSyntaxError(exc.msg, exc.lineno, exc.colno) from exc
    if not isinstance(raw, dict):
        raise FieldTypeError("<document>", "a JSON object")

    for key in raw:
        if key not in _KNOWN_FIELDS:
            raise UnknownFieldError(key)
    for name in _REQUIRED_FIELDS:
        if name not in raw:
            raise MissingFieldError(name)

    kwargs: dict = {}
    for name in _STRING_FIELDS:
        if name in raw:
            kwargs[name] = _expect_str(name, raw[name])
    for name in _INT_FIELDS:
        if name in raw:
            kwargs[name] = _expect_int(name, raw[name])
    if "mode" in kwargs and kwargs["mode"] not in MODES:
        raise FieldTypeError("mode", "one of " + " | ".join(MODES))
    if "node_profile" in raw:
        kwargs["node_profile"] = _parse_node_profile(raw["node_profile"])
    if "command_template" in raw and raw["command_template"] is not None:
        kwargs["command_template"] = _expect_str("command_template", raw["command_template"])

    return Manifest(**kwargs)


def serialize_manifest(m: Manifest) -> str:
    """Render a manifest back to its JSON document form.

    parse_manifest(serialize_manifest(m)) == m for every manifest.
    """
    doc = {
        "campaign_name": m.campaign_name,
        "template_dir": m.template_dir,
        "world_file": m.world_file,
        "total_runs": m.total_runs,
        "nodes": m.nodes,
        "slots_per_node": m.slots_per_node,
        "base_port": m.base_port,
        "port_stride": m.port_stride,
        "display_start": m.display_start,
        "walltime_minutes": m.walltime_minutes,
        "queue": m.queue,
        "node_profile": {
            "cores": m.node_profile.cores,
            "ram_gb": m.node_profile.ram_gb,
            "scratch_gb": m.node_profile.scratch_gb,
            "gpus": m.node_profile.gpus,
        },
        "mode": m.mode,
        "container_image": m.container_image,
        "output_dir": m.output_dir,
        "command_template": m.command_template,
    }
    return json.dumps(doc, indent=2) + "\n"


def load_manifest(path: str | Path) -> Manifest:
    """Read and parse a manifest file.

    Relative template_dir/output_dir entries are resolved against the
    manifest's own directory, so a campaign directory can be moved as a
    unit. world_file stays relative (it names a file inside template_dir).
    """
    path = Path(path)
    try:
        document = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    m = parse_manifest(document)
    base = path.resolve().parent
    updates = {}
    for name in ("template_dir", "output_dir"):
        value = getattr(m, name)
        if not Path(value).is_absolute():
            updates[name] = str(base / value)
    return replace(m, **updates) if updates else m


def validate(m: Manifest, check_paths: bool = False) -> list[str]:
    """Collect every invariant violation; an empty list means valid.

    With check_paths=True, template_dir and world_file must also exist on
    disk. Never raises for manifests produced by parse_manifest.
    """
    violations: list[str] = []

    if not m.campaign_name or any(c.isspace() for c in m.campaign_name):
        violations.append(f"campaign_name must be a non-empty identifier without whitespace (got {m.campaign_name!r})")
    if not m.queue:
        violations.append("queue must be a non-empty identifier")

    for name, minimum in (
        ("total_runs", 1),
        ("nodes", 1),
        ("slots_per_node", 1),
        ("port_stride", 1),
        ("walltime_minutes", 1),
        ("display_start", 0),
    ):
        value = getattr(m, name)
        if value < minimum:
            violations.append(f"{name} must be at least {minimum} (got {value})")

    if m.base_port < MIN_PORT:
        violations.append(f"base_port must be at least {MIN_PORT} (got {m.base_port})")
    span = m.instances_per_job() - 1
    top = m.base_port + m.port_stride * span
    if top > MAX_PORT:
        violations.append(
            f"port ladder overflows: {m.base_port} + {m.port_stride} * {span} = {top} exceeds {MAX_PORT}"
        )

    if m.mode not in MODES:
        violations.append(f"mode must be one of {' | '.join(MODES)} (got {m.mode!r})")

    profile = m.node_profile
    if profile.cores < 1:
        violations.append(f"node_profile.cores must be at least 1 (got {profile.cores})")
    for name in ("ram_gb", "scratch_gb", "gpus"):
        value = getattr(profile, name)
        if value < 0:
            violations.append(f"node_profile.{name} must be nonnegative (got {value})")

    if check_paths:
        template = Path(m.template_dir)
        if not template.is_dir():
            violations.append(f"template_dir does not exist or is not a directory: {template}")
        elif not (template / m.world_file).is_file():
            violations.append(f"world_file not found under template_dir: {template / m.world_file}")

    return violations
