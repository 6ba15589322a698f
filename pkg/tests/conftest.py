from __future__ import annotations

import os
import sys
from pathlib import Path

import pytest

SRC_DIR = Path(__file__).resolve().parents[1] / "src"
if str(SRC_DIR) not in sys.path:
    sys.path.insert(0, str(SRC_DIR))

# Children spawned during tests run `python -m simcampaign`; make sure they
# can import the source tree even when the package is not installed.
_existing = os.environ.get("PYTHONPATH")
os.environ["PYTHONPATH"] = str(SRC_DIR) + (os.pathsep + _existing if _existing else "")

from simcampaign.manifest import Manifest  # noqa: E402

WORLD_TEXT = "DEF SUMO_INTERFACE SumoInterface {\n  gui FALSE\n  port 8873\n}\n"


def stub_command(duration: float = 0.3, rows: int = 5, seed: int = 3, fail_mode: str | None = None) -> str:
    cmd = f"{sys.executable} -m simcampaign stub --duration {duration} --rows {rows} --seed {seed}"
    if fail_mode:
        cmd += f" --fail-mode {fail_mode}"
    return cmd


def make_template(root: Path) -> Path:
    template = root / "template"
    template.mkdir(parents=True, exist_ok=True)
    (template / "world.wbt").write_text(WORLD_TEXT)
    (template / "controller.py").write_text("STEP_MS = 32\n")
    return template


def make_manifest(template: Path, output_dir: Path, **overrides) -> Manifest:
    fields = dict(
        campaign_name="test-campaign",
        template_dir=str(template),
        world_file="world.wbt",
        total_runs=4,
        output_dir=str(output_dir),
        nodes=2,
        slots_per_node=2,
        walltime_minutes=1,
    )
    fields.update(overrides)
    return Manifest(**fields)


@pytest.fixture
def template_dir(tmp_path):
    return make_template(tmp_path)
