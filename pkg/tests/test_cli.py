import json
import os
import stat
import sys
from pathlib import Path

import pytest

from conftest import make_manifest, make_template, stub_command
from simcampaign import cli
from simcampaign.manifest import serialize_manifest


def write_manifest(tmp_path: Path, **overrides) -> Path:
    template = make_template(tmp_path)
    m = make_manifest(template, tmp_path / "out", **overrides)
    path = tmp_path / "manifest.json"
    path.write_text(serialize_manifest(m))
    return path


def desk_manifest(tmp_path: Path, **overrides) -> Path:
    overrides.setdefault("command_template", stub_command(duration=0.2, rows=3))
    return write_manifest(tmp_path, **overrides)


class TestUsage:
    def test_no_verb_is_usage_error(self, capsys):
        assert cli.main([]) == 64
        assert "usage" in capsys.readouterr().err

    def test_unknown_verb_is_usage_error(self, capsys):
        assert cli.main(["frobnicate"]) == 64
        err = capsys.readouterr().err
        assert "usage" in err

    def test_missing_manifest_flag_is_usage_error(self, capsys):
        assert cli.main(["plan"]) == 64


class TestPlan:
    def test_reference_campaign_prints_all_assignments(self, tmp_path, capsys):
        path = write_manifest(tmp_path, total_runs=48, nodes=6, slots_per_node=8)
        assert cli.main(["plan", "--manifest", str(path)]) == 0
        out = capsys.readouterr().out
        assert "jobs=1" in out
        assert sum(1 for line in out.splitlines() if line.startswith("instance ")) == 48

    def test_invalid_manifest_is_validation_failure(self, tmp_path, capsys):
        path = write_manifest(tmp_path, port_stride=0)
        assert cli.main(["plan", "--manifest", str(path)]) == 1
        assert "port_stride" in capsys.readouterr().err

    def test_unreadable_manifest_is_validation_failure(self, tmp_path, capsys):
        assert cli.main(["plan", "--manifest", str(tmp_path / "absent.json")]) == 1

    def test_malformed_manifest_reports_position(self, tmp_path, capsys):
        path = tmp_path / "broken.json"
        path.write_text('{"campaign_name": }')
        assert cli.main(["plan", "--manifest", str(path)]) == 1
        assert "line 1" in capsys.readouterr().err


class TestFanout:
    def test_materializes_instances_and_plan_index(self, tmp_path, capsys):
        path = desk_manifest(tmp_path, total_runs=3)
        assert cli.main(["fanout", "--manifest", str(path)]) == 0
        out_dir = tmp_path / "out"
        assert (out_dir / "plan.json").is_file()
        assert (out_dir / "instance_0000" / "world.wbt").is_file()
        assert (out_dir / "instance_0002").is_dir()

    def test_missing_template_fails_validation(self, tmp_path, capsys):
        path = desk_manifest(tmp_path)
        import shutil

        shutil.rmtree(tmp_path / "template")
        assert cli.main(["fanout", "--manifest", str(path)]) == 1


class TestScript:
    def test_writes_script_and_commands(self, tmp_path):
        path = write_manifest(tmp_path, total_runs=6)
        assert cli.main(["script", "--manifest", str(path)]) == 0
        script = (tmp_path / "out" / "job.pbs").read_text()
        commands = (tmp_path / "out" / "commands.txt").read_text().splitlines()
        assert script.startswith("#!/bin/bash")
        assert len(commands) == 6
        assert "#PBS -J 0-1" in script  # 6 runs over 4-instance jobs -> 2 array elements


class TestRunLocalAndFriends:
    def run_pipeline(self, path: Path) -> None:
        assert cli.main(["fanout", "--manifest", str(path)]) == 0
        assert cli.main(["run-local", "--manifest", str(path)]) == 0

    def test_run_local_records_every_instance(self, tmp_path, capsys):
        path = desk_manifest(tmp_path, total_runs=4)
        self.run_pipeline(path)
        out = capsys.readouterr().out
        assert "completed 4 instances" in out
        assert "succeeded=4" in out

    def test_run_local_without_fanout_is_execution_failure(self, tmp_path, capsys):
        path = desk_manifest(tmp_path)
        assert cli.main(["run-local", "--manifest", str(path)]) == 2
        assert "fanout" in capsys.readouterr().err

    def test_rerun_requires_force_when_not_interactive(self, tmp_path, capsys):
        path = desk_manifest(tmp_path, total_runs=2, nodes=1, slots_per_node=2)
        self.run_pipeline(path)
        assert cli.main(["run-local", "--manifest", str(path)]) == 1
        assert "--force" in capsys.readouterr().err
        assert cli.main(["run-local", "--manifest", str(path), "--force"]) == 0

    def test_status_reports_counts(self, tmp_path, capsys):
        path = desk_manifest(tmp_path, total_runs=2, nodes=1, slots_per_node=2)
        assert cli.main(["status", "--manifest", str(path)]) == 0
        assert "pending=2" in capsys.readouterr().out
        self.run_pipeline(path)
        capsys.readouterr()
        assert cli.main(["status", "--manifest", str(path)]) == 0
        assert "succeeded=2" in capsys.readouterr().out

    def test_collect_writes_merged_and_summary(self, tmp_path, capsys):
        path = desk_manifest(tmp_path, total_runs=4)
        self.run_pipeline(path)
        assert cli.main(["collect", "--manifest", str(path)]) == 0
        merged = (tmp_path / "out" / "merged.csv").read_text().splitlines()
        assert len(merged) == 1 + 4 * 3  # header + 4 runs x 3 rows
        summary = json.loads((tmp_path / "out" / "summary.json").read_text())
        assert summary["completion_rate"] == 1.0
        assert summary["samples"]["walltime"] == 4

    def test_report_writes_evaluation(self, tmp_path, capsys):
        path = write_manifest(tmp_path, total_runs=48, nodes=6, slots_per_node=8, walltime_minutes=15)
        assert cli.main(["report", "--manifest", str(path), "--table"]) == 0
        out = capsys.readouterr().out
        assert "2304" in out
        doc = json.loads((tmp_path / "out" / "evaluation.json").read_text())
        assert doc["speedup"] == 31.14
        assert doc["deltas"]["walltime_pct"] == pytest.approx(-33.47, abs=0.01)

    def test_output_dir_override_via_environment(self, tmp_path, monkeypatch):
        path = desk_manifest(tmp_path, total_runs=2, nodes=1, slots_per_node=2)
        override = tmp_path / "elsewhere"
        monkeypatch.setenv("SIMCAMPAIGN_OUTPUT", str(override))
        assert cli.main(["fanout", "--manifest", str(path)]) == 0
        assert (override / "plan.json").is_file()
        assert not (tmp_path / "out").exists()


class TestSubmit:
    def test_passes_script_to_qsub_and_prints_job_id(self, tmp_path, capsys, monkeypatch):
        path = write_manifest(tmp_path, total_runs=4)
        assert cli.main(["script", "--manifest", str(path)]) == 0
        fake_bin = tmp_path / "bin"
        fake_bin.mkdir()
        qsub = fake_bin / "qsub"
        qsub.write_text("#!/bin/sh\necho 1234567.pbs-server\n")
        qsub.chmod(qsub.stat().st_mode | stat.S_IEXEC)
        monkeypatch.setenv("PATH", f"{fake_bin}:{os.environ['PATH']}")
        capsys.readouterr()
        assert cli.main(["submit", "--manifest", str(path)]) == 0
        assert capsys.readouterr().out.strip() == "1234567.pbs-server"

    def test_missing_qsub_is_execution_failure(self, tmp_path, capsys, monkeypatch):
        path = write_manifest(tmp_path, total_runs=4)
        assert cli.main(["script", "--manifest", str(path)]) == 0
        monkeypatch.setenv("PATH", str(tmp_path / "empty-bin"))
        assert cli.main(["submit", "--manifest", str(path)]) == 2

    def test_missing_script_is_execution_failure(self, tmp_path, capsys):
        path = write_manifest(tmp_path, total_runs=4)
        assert cli.main(["submit", "--manifest", str(path)]) == 2


class TestStubVerb:
    def test_stub_runs_standalone(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        monkeypatch.setenv("SIM_PORT", "18895")
        monkeypatch.setenv("SIM_OUTPUT", str(tmp_path / "out.csv"))
        code = cli.main(["stub", "--duration", "0.1", "--rows", "2", "--seed", "9"])
        assert code == 0
        assert (tmp_path / "out.csv").read_text().splitlines()[0] == "run_id,step,value"

    def test_stub_does_not_require_manifest(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        monkeypatch.setenv("SIM_OUTPUT", str(tmp_path / "out.csv"))
        monkeypatch.delenv("SIM_PORT", raising=False)
        assert cli.main(["stub", "--duration", "0.1", "--fail-mode", "skip_bind"]) == 0


class TestEndToEnd:
    def test_full_lifecycle_composes(self, tmp_path, capsys):
        path = desk_manifest(tmp_path, total_runs=4)
        for argv in (
            ["plan", "--manifest", str(path)],
            ["fanout", "--manifest", str(path)],
            ["script", "--manifest", str(path)],
            ["run-local", "--manifest", str(path)],
            ["collect", "--manifest", str(path)],
            ["report", "--manifest", str(path)],
        ):
            assert cli.main(argv) == 0, argv
        out_dir = tmp_path / "out"
        for name in ("plan.json", "job.pbs", "commands.txt", "records.jsonl", "merged.csv",
                     "summary.json", "evaluation.json"):
            assert (out_dir / name).is_file(), name

    def test_bundled_example_campaign(self, tmp_path, capsys):
        # The shipped example must run unedited; copy it so outputs stay in tmp.
        import shutil

        bundled = Path(__file__).resolve().parents[1] / "example_campaign"
        campaign = tmp_path / "example_campaign"
        shutil.copytree(bundled, campaign)
        path = campaign / "manifest.json"
        for verb in ("plan", "fanout", "script", "run-local", "collect", "report"):
            assert cli.main([verb, "--manifest", str(path)]) == 0, verb
        summary = json.loads((campaign / "campaign_out" / "summary.json").read_text())
        assert summary["completion_rate"] == 1.0
