"""Command-line entry points.

    visrooms serve --config room.json --listen 127.0.0.1:7420 --log-dir logs/
    visrooms sim run --script scenario.json [--seed N] [--report out.json]
    visrooms sim analyze --oplog room.oplog.ndjson --format csv

``--log-dir`` falls back to the VISROOMS_LOG_DIR environment variable. The
sim exits nonzero on non-convergence.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import logging
import os
import sys
from pathlib import Path

from .corpora import CORPUS_NAMES, load_corpus
from .metrics import analyze_log, export_report
from .rooms import RoomConfig
from .sim import NonConvergenceError, ScenarioScript, ScriptError, run_scenario


def _load_config(spec: str) -> RoomConfig:
    if spec in CORPUS_NAMES:
        return RoomConfig.from_dict(load_corpus(spec))
    return RoomConfig.from_file(spec)


def _cmd_serve(args: argparse.Namespace) -> int:
    from .server import run_server

    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s %(message)s")
    config = _load_config(args.config)
    log_dir = args.log_dir or os.environ.get("VISROOMS_LOG_DIR")
    try:
        asyncio.run(run_server(config, args.listen, log_dir=log_dir, transport=args.transport))
    except KeyboardInterrupt:
        pass
    return 0


def _cmd_sim_run(args: argparse.Namespace) -> int:
    try:
        script = ScenarioScript.from_file(args.script)
        result = run_scenario(
            script,
            seed=args.seed,
            log_dir=args.log_dir or os.environ.get("VISROOMS_LOG_DIR"),
            realtime=args.realtime,
        )
    except NonConvergenceError as exc:
        print(f"NONCONVERGENCE: {exc}", file=sys.stderr)
        return 2
    except ScriptError as exc:
        print(f"script error: {exc}", file=sys.stderr)
        return 3
    report_dict = result.report.to_dict()
    report_dict["finalStateHash"] = result.state_hash
    text = json.dumps(report_dict, indent=2, sort_keys=True)
    if args.report:
        Path(args.report).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)
    print(
        f"converged={result.report.converged} ops={result.report.total_ops()} "
        f"hash={result.state_hash[:16]}",
        file=sys.stderr,
    )
    return 0


def _cmd_sim_analyze(args: argparse.Namespace) -> int:
    report = analyze_log(args.oplog)
    sys.stdout.write(export_report(report, args.format, path=args.out))
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="visrooms")
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run the collaboration server")
    serve.add_argument("--config", required=True, help="room config file or bundled corpus name")
    serve.add_argument("--listen", default="127.0.0.1:7420", help="host:port")
    serve.add_argument("--log-dir", default=None, help="journal directory (or VISROOMS_LOG_DIR)")
    serve.add_argument("--transport", choices=("tcp", "ws"), default="tcp")
    serve.set_defaults(func=_cmd_serve)

    sim = sub.add_parser("sim", help="simulation harness")
    sim_sub = sim.add_subparsers(dest="sim_command", required=True)

    run = sim_sub.add_parser("run", help="run a scenario script")
    run.add_argument("--script", required=True)
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--report", default=None, help="write the JSON report here")
    run.add_argument("--log-dir", default=None, help="persist the room journal here")
    run.add_argument("--realtime", action="store_true", help="run on the wall clock (soak mode)")
    run.set_defaults(func=_cmd_sim_run)

    analyze = sim_sub.add_parser("analyze", help="analyze a persisted journal")
    analyze.add_argument("--oplog", required=True)
    analyze.add_argument("--format", choices=("json", "csv"), default="json")
    analyze.add_argument("--out", default=None)
    analyze.set_defaults(func=_cmd_sim_analyze)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
