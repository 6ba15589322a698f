"""Command-line entry point for the campaign lifecycle.

    simcampaign <verb> --manifest <path> [flags]

Verbs: plan, fanout, script, run-local, submit, status, collect, report,
and the internal stub verb that generated commands invoke. Exit codes:
0 success, 1 validation failure, 2 execution failure, 64 usage error.
"""

from __future__ import annotations

import argparse
import logging
import os
import shutil
import subprocess
import sys
from dataclasses import replace
from pathlib import Path

from . import collector, evaluator, fanout, localexec, scheduler, simstub
from .manifest import Manifest, ManifestError, load_manifest, validate

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_EXECUTION = 2
EXIT_USAGE = 64

OUTPUT_ENV_VAR = "SIMCAMPAIGN_OUTPUT"


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _load(args) -> Manifest:
    m = load_manifest(args.manifest)
    override = os.environ.get(OUTPUT_ENV_VAR)
    if override:
        m = replace(m, output_dir=str(Path(override).absolute()))
    return m


def _reject(violations: list[str]) -> int:
    for violation in violations:
        print(f"manifest violation: {violation}", file=sys.stderr)
    return EXIT_VALIDATION


def _cmd_plan(args) -> int:
    m = _load(args)
    violations = validate(m)
    if violations:
        return _reject(violations)
    plan = scheduler.plan_distribution(m.total_runs, m.nodes, m.slots_per_node)
    print(
        f"campaign {m.campaign_name}: total_runs={m.total_runs} "
        f"nodes={m.nodes} slots_per_node={m.slots_per_node} jobs={plan.jobs}"
    )
    for a in plan.assignments:
        print(f"instance {a.instance_id:4d} -> job {a.job_index}  node {a.node_index}  slot {a.slot_index}")
    return EXIT_OK


def _cmd_fanout(args) -> int:
    m = _load(args)
    violations = validate(m, check_paths=True)
    if violations:
        return _reject(violations)
    plans = fanout.fan_out(m, m.total_runs)
    print(f"materialized {len(plans)} instances under {m.output_dir}")
    print(f"plan index: {Path(m.output_dir) / fanout.PLAN_FILENAME}")
    return EXIT_OK


def _cmd_script(args) -> int:
    m = _load(args)
    violations = validate(m)
    if violations:
        return _reject(violations)
    script_path, commands_path = scheduler.write_job_script(m)
    print(f"wrote {script_path}")
    print(f"wrote {commands_path}")
    return EXIT_OK


def _cmd_run_local(args) -> int:
    m = _load(args)
    violations = validate(m, check_paths=True)
    if violations:
        return _reject(violations)
    plan_path = Path(m.output_dir) / fanout.PLAN_FILENAME
    if not plan_path.is_file():
        print(f"error: no plan index at {plan_path}; run fanout first", file=sys.stderr)
        return EXIT_EXECUTION
    records_path = Path(m.output_dir) / localexec.RECORDS_FILENAME
    if records_path.exists() and records_path.stat().st_size > 0 and not args.force:
        if sys.stdin.isatty():
            answer = input(f"{records_path} already holds records; replace them? [y/N] ")
            if answer.strip().lower() not in ("y", "yes"):
                print("aborted", file=sys.stderr)
                return EXIT_VALIDATION
        else:
            print(f"error: {records_path} already holds records; pass --force to replace", file=sys.stderr)
            return EXIT_VALIDATION
    instances = fanout.load_plan_index(plan_path)
    plan = scheduler.plan_distribution(m.total_runs, m.nodes, m.slots_per_node)
    records = localexec.run_job_array(plan, m, instances)
    summary = localexec.status(m.output_dir, m.total_runs)
    print(
        f"completed {len(records)} instances: succeeded={summary.succeeded} "
        f"failed={summary.failed} killed={summary.killed}"
    )
    return EXIT_OK


def _cmd_submit(args) -> int:
    m = _load(args)
    violations = validate(m)
    if violations:
        return _reject(violations)
    script_path = Path(m.output_dir) / scheduler.JOB_SCRIPT_FILENAME
    if not script_path.is_file():
        print(f"error: no job script at {script_path}; run script first", file=sys.stderr)
        return EXIT_EXECUTION
    qsub = shutil.which("qsub")
    if qsub is None:
        print("error: qsub not found on PATH", file=sys.stderr)
        return EXIT_EXECUTION
    result = subprocess.run([qsub, str(script_path)], capture_output=True, text=True)
    if result.returncode != 0:
        sys.stderr.write(result.stderr)
        return EXIT_EXECUTION
    print(result.stdout.strip())
    return EXIT_OK


def _cmd_status(args) -> int:
    m = _load(args)
    summary = localexec.status(m.output_dir, m.total_runs)
    print(
        f"pending={summary.pending} running={summary.running} succeeded={summary.succeeded} "
        f"failed={summary.failed} killed={summary.killed}"
    )
    return EXIT_OK


def _cmd_collect(args) -> int:
    m = _load(args)
    records = localexec.load_records(m.output_dir)
    plan_path = Path(m.output_dir) / fanout.PLAN_FILENAME
    workdirs: dict[int, str] = {}
    if plan_path.is_file():
        workdirs = {p.instance_id: p.workdir for p in fanout.load_plan_index(plan_path)}
    merged_path = Path(m.output_dir) / collector.MERGED_FILENAME
    dataset = collector.collect(records, workdirs, merged_path)
    for message in dataset.integrity_errors:
        print(f"integrity error: {message}", file=sys.stderr)

    completion = collector.completion_rate(records) if records else None
    summary = collector.resource_summary(records) if records else None
    summary_path = Path(m.output_dir) / collector.SUMMARY_FILENAME
    collector.write_summary(summary_path, completion, summary)
    print(f"merged {dataset.runs_included} runs, {dataset.rows} rows -> {dataset.output_path}")
    print(f"summary: {summary_path}")
    return EXIT_OK


def _cmd_report(args) -> int:
    m = _load(args)
    cfg = evaluator.ThroughputConfig(nodes=m.nodes, slots=m.slots_per_node, walltime_minutes=m.walltime_minutes)
    deltas = evaluator.compare_configs(*evaluator.load_reference_comparison())
    report = evaluator.build_report(cfg, deltas=deltas)
    out_dir = Path(m.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report_path = out_dir / evaluator.REPORT_FILENAME
    evaluator.write_report(report, report_path)
    if args.table:
        print(evaluator.format_table(report))
    print(f"speedup over baseline: {report.speedup:.2f}")
    print(f"report: {report_path}")
    return EXIT_OK


def _cmd_stub(args) -> int:
    cfg = simstub.config_from_environment(
        duration_s=args.duration,
        rows=args.rows,
        seed=args.seed,
        fail_mode=args.fail_mode,
        environ=os.environ,
    )
    return simstub.stub_main(cfg)


def build_parser() -> _Parser:
    parser = _Parser(prog="simcampaign", description="Batch simulation-campaign orchestrator")
    parser.add_argument("-v", "--verbose", action="store_true", help="enable info-level logging")
    sub = parser.add_subparsers(dest="verb", required=True)

    def add_verb(name: str, handler, help_text: str, manifest_required: bool = True):
        p = sub.add_parser(name, help=help_text)
        if manifest_required:
            p.add_argument("--manifest", required=True, help="path to the campaign manifest (JSON)")
        p.set_defaults(handler=handler)
        return p

    add_verb("plan", _cmd_plan, "print the instance distribution over jobs, nodes, and slots")
    add_verb("fanout", _cmd_fanout, "materialize instance copies of the template")
    add_verb("script", _cmd_script, "write the job-array script and command list")
    run_local = add_verb("run-local", _cmd_run_local, "execute the campaign on this machine")
    run_local.add_argument("--force", action="store_true", help="replace an existing record stream")
    add_verb("submit", _cmd_submit, "hand the generated job script to qsub")
    add_verb("status", _cmd_status, "summarize the record stream")
    add_verb("collect", _cmd_collect, "merge per-instance outputs and write the summary")
    report = add_verb("report", _cmd_report, "write the throughput/speedup evaluation")
    report.add_argument("--table", action="store_true", help="print the throughput table")

    stub = add_verb("stub", _cmd_stub, "run one stand-in simulator instance (internal)", manifest_required=False)
    stub.add_argument("--duration", type=float, default=1.0, help="seconds to run before emitting output")
    stub.add_argument("--rows", type=int, default=10, help="CSV data rows to emit")
    stub.add_argument("--seed", type=int, default=0, help="seed for the deterministic values")
    stub.add_argument("--fail-mode", choices=simstub.FAIL_MODES, default="none", dest="fail_mode")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.handler(args)
    except ManifestError as exc:
        print(f"manifest error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # map any execution fault to the documented code
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EXECUTION


if __name__ == "__main__":
    sys.exit(main())
