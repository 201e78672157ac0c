"""Headless entry point: scripted runs, maze generation, log replay, serving.

Exit codes
  0  success (a `run` that reaches Completed; a clean `replay`)
  1  unreadable or invalid input (files, dimensions, bind address)
  2  `run` script exhausted before the session completed
  3  `run` ended in an unresolved safety halt
  4  `replay` found a divergence (the message names the first bad seq)

`run` writes the RunReport as one canonical JSON line (stdout, or --out).
The report schema ships at the repo root as run-report.schema.json.  Pass
--log to also save the event log, one event per line, which `replay` can
verify later against the same scenario, script, and seed.

Scripts are plain text: one utterance per line, blank lines and # comments
skipped, and @expect-error annotations tolerated (they matter to corpus
tooling, not to runs).  Nothing is auto-answered; put answer lines
("yes", "left", ...) where the run needs them.

--scenario takes a path to a scenario file, or the name of a bundled
scenario (`echomaze run --scenario default ...` works out of the box).

`serve` honors ECHOMAZE_LOG_DIR for where session logs go; without it a
fresh temporary directory is used and printed on startup.
"""

from __future__ import annotations

import argparse
import os
import re
import socket
import sys
import tempfile
import time
from pathlib import Path

import uvicorn

from .command_lang import read_script
from .scenario import (
    MalformedScenario,
    Scenario,
    area_warning,
    bundled_scenario_names,
    load_bundled,
    load_scenario,
    save_scenario,
)
from .service import create_app
from .session import (
    Mode,
    SessionInitFailure,
    SessionOver,
    compute_metrics,
    create_session,
    drive,
)
from .wire import dumps, event_line, read_log, write_log
from .world import InvalidDimensions, generate_maze

EXIT_OK = 0
EXIT_UNREADABLE = 1
EXIT_SCRIPT_EXHAUSTED = 2
EXIT_SAFETY_HALT = 3
EXIT_DIVERGED = 4


def read_script_file(path: str | Path) -> list[str]:
    text = Path(path).read_text(encoding="utf-8")
    return [line.text for line in read_script(text)]


def load_scenario_arg(value: str) -> Scenario:
    path = Path(value)
    if path.exists():
        return load_scenario(path)
    if value in bundled_scenario_names():
        return load_bundled(value)
    raise FileNotFoundError(
        f"cannot read scenario {value!r}: not a file and not one of "
        f"{bundled_scenario_names()}"
    )


def run_script(scenario: Scenario, seed: int, script: list[str]):
    state = create_session(scenario, seed)
    for text in script:
        try:
            drive(state, text)
        except SessionOver:
            break
    return state


def cmd_run(args: argparse.Namespace) -> int:
    t0 = time.perf_counter()
    scenario = load_scenario_arg(args.scenario)
    script = read_script_file(args.script)
    state = run_script(scenario, args.seed, script)
    report = compute_metrics(state).as_dict()
    report["scenario"] = scenario.name
    report["seed"] = args.seed
    report["runtime_s"] = time.perf_counter() - t0
    report["event_count"] = len(state.log)
    if args.debug_truth:
        report["true_trace"] = [[p.x, p.y, p.theta] for p in state.true_trace]
    line = dumps(report)
    if args.out:
        Path(args.out).write_text(line + "\n", encoding="utf-8")
    else:
        print(line)
    if args.log:
        write_log(state.log, args.log)
    if state.mode is Mode.COMPLETED:
        return EXIT_OK
    if state.mode is Mode.SAFETY_HALT:
        print("safety halt left unresolved", file=sys.stderr)
        return EXIT_SAFETY_HALT
    print("script exhausted before completion", file=sys.stderr)
    return EXIT_SCRIPT_EXHAUSTED


def cmd_gen_maze(args: argparse.Namespace) -> int:
    m = re.fullmatch(r"(\d+)x(\d+)", args.cells)
    if m is None:
        raise ValueError(f"--cells wants WIDTHxHEIGHT, got {args.cells!r}")
    width, height = int(m.group(1)), int(m.group(2))
    maze = generate_maze(width, height, args.cell_size, args.seed)
    warn = area_warning(maze)
    if warn is not None:
        print(f"warning: {warn}", file=sys.stderr)
    name = f"gen-{args.cells}-seed{args.seed}"
    save_scenario(Scenario(name=name, maze=maze), args.out)
    print(f"wrote {args.out}", file=sys.stderr)
    return EXIT_OK


def cmd_replay(args: argparse.Namespace) -> int:
    want = read_log(args.log)
    scenario = load_scenario_arg(args.scenario)
    script = read_script_file(args.script)
    state = run_script(scenario, args.seed, script)
    got = [event_line(e) for e in state.log]
    shared = min(len(want), len(got))
    for i in range(shared):
        if want[i] != got[i]:
            print(f"logs diverge at seq {i + 1}", file=sys.stderr)
            return EXIT_DIVERGED
    if len(want) != len(got):
        print(f"logs diverge at seq {shared + 1}", file=sys.stderr)
        return EXIT_DIVERGED
    print(f"replay clean: {len(got)} events", file=sys.stderr)
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    try:
        probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        probe.bind((args.bind, args.port))
        probe.close()
    except OSError as exc:
        print(f"cannot bind {args.bind}:{args.port}: {exc}", file=sys.stderr)
        return EXIT_UNREADABLE
    log_dir = os.environ.get("ECHOMAZE_LOG_DIR")
    if not log_dir:
        log_dir = tempfile.mkdtemp(prefix="echomaze-logs-")
    print(f"session logs: {log_dir}", file=sys.stderr)
    uvicorn.run(create_app(log_dir=log_dir), host=args.bind, port=args.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="echomaze", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute an utterance script, write a RunReport")
    run.add_argument("--scenario", required=True,
                     help="scenario file, or a bundled scenario name")
    run.add_argument("--script", required=True, help="utterance script file")
    run.add_argument("--seed", required=True, type=int)
    run.add_argument("--debug-truth", action="store_true",
                     help="include the ground-truth pose trace in the report")
    run.add_argument("--out", help="write the report here instead of stdout")
    run.add_argument("--log", help="also write the event log here")
    run.set_defaults(fn=cmd_run)

    gen = sub.add_parser("gen-maze", help="generate a perfect-maze scenario file")
    gen.add_argument("--cells", required=True, help="WIDTHxHEIGHT, odd, at least 5x5")
    gen.add_argument("--cell-size", required=True, type=float, help="meters per cell")
    gen.add_argument("--seed", required=True, type=int)
    gen.add_argument("--out", required=True)
    gen.set_defaults(fn=cmd_gen_maze)

    replay = sub.add_parser("replay", help="verify a log against a regenerated run")
    replay.add_argument("--log", required=True)
    replay.add_argument("--scenario", required=True)
    replay.add_argument("--script", required=True)
    replay.add_argument("--seed", required=True, type=int)
    replay.set_defaults(fn=cmd_replay)

    serve = sub.add_parser("serve", help="run the HTTP service until interrupted")
    serve.add_argument("--port", type=int, default=8000)
    serve.add_argument("--bind", default="127.0.0.1")
    serve.set_defaults(fn=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (OSError, MalformedScenario, SessionInitFailure,
            InvalidDimensions, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNREADABLE


if __name__ == "__main__":
    sys.exit(main())
