"""Bundled stand-in simulator child process.

Reproduces the externally observable contract of a real simulator
instance: it claims its TCP port by binding a listening socket (only one
process can hold a given port), runs for a bounded duration as its stop
condition, and emits a deterministic CSV dataset. A second process handed
the same port exits with code 98 before producing any output.
"""

from __future__ import annotations

import random
import socket
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

HEARTBEAT_FILENAME = "heartbeat"
CSV_HEADER = "run_id,step,value"

EXIT_OK = 0
EXIT_CRASH = 1
EXIT_CONFIG = 2
EXIT_PORT_IN_USE = 98

FAIL_MODES = ("none", "skip_bind", "crash_at_start")


@dataclass(frozen=True)
class StubConfig:
    """One stub invocation: flags plus the SIM_PORT/SIM_OUTPUT environment."""

    port: int | None
    duration_s: float
    rows: int
    fail_mode: str = "none"
    seed: int = 0
    output_path: str | None = None


def config_from_environment(
    duration_s: float,
    rows: int,
    seed: int,
    fail_mode: str,
    environ: Mapping[str, str],
) -> StubConfig:
    """Build a StubConfig from command-line flags and the process environment."""
    port_raw = environ.get("SIM_PORT")
    return StubConfig(
        port=int(port_raw) if port_raw else None,
        duration_s=duration_s,
        rows=rows,
        fail_mode=fail_mode,
        seed=seed,
        output_path=environ.get("SIM_OUTPUT"),
    )


def _now_ms() -> int:
    return int(time.time() * 1000)


def stub_main(cfg: StubConfig) -> int:
    """Run one stub instance in the current working directory.

    Exit codes: 0 success, 1 crash-at-start, 2 bad configuration,
    98 port already bound. On the success path the heartbeat file brackets
    the working interval and SIM_OUTPUT receives exactly cfg.rows data
    lines under the run_id,step,value header.
    """
    if cfg.fail_mode not in FAIL_MODES:
        print(f"simstub: unknown fail mode {cfg.fail_mode!r}", file=sys.stderr)
        return EXIT_CONFIG
    if cfg.fail_mode == "crash_at_start":
        print("simstub: crashing at start as instructed", file=sys.stderr)
        return EXIT_CRASH
    if cfg.duration_s <= 0 or cfg.rows < 1 or cfg.seed < 0:
        print("simstub: duration must be > 0, rows >= 1, seed >= 0", file=sys.stderr)
        return EXIT_CONFIG
    if cfg.output_path is None:
        print("simstub: SIM_OUTPUT is not set", file=sys.stderr)
        return EXIT_CONFIG

    server = None
    if cfg.fail_mode != "skip_bind":
        if cfg.port is None:
            print("simstub: SIM_PORT is not set", file=sys.stderr)
            return EXIT_CONFIG
        server = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        try:
            server.bind(("127.0.0.1", cfg.port))
            server.listen(1)
        except OSError as exc:
            server.close()
            print(f"simstub: cannot bind port {cfg.port}: {exc}", file=sys.stderr)
            return EXIT_PORT_IN_USE

    heartbeat = Path(HEARTBEAT_FILENAME)
    heartbeat.write_text(f"start {_now_ms()}\n", encoding="utf-8")

    time.sleep(cfg.duration_s)

    rng = random.Random(cfg.seed)
    lines = [CSV_HEADER]
    lines += [f"{cfg.seed},{step},{rng.random():.10f}" for step in range(cfg.rows)]
    Path(cfg.output_path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    with heartbeat.open("a", encoding="utf-8") as fh:
        fh.write(f"end {_now_ms()}\n")
    if server is not None:
        server.close()
    return EXIT_OK
