"""Command line entry point.

    megaagent run --meta task.txt --scenario gobang.json --workspace out/
    megaagent run --meta task.txt --scenario gobang.json --log run.jsonl
    megaagent replay --log out/log.jsonl
    megaagent report --log out/log.jsonl

Exit codes: 0 success, 2 partial deliverable (aborted run), 1 usage error
or broken log.
"""
import argparse
import json
import logging
import sys
from typing import List, Optional

from .config import Config
from .error import MegaAgentError
from .gateway.backend import HTTPBackend, ScriptedBackend
from .gateway.scenario import ScriptedScenario
from .orchestrator import MetaPrompt, Orchestrator
from .runtime.replay import load_log, replay

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_PARTIAL = 2

DEFAULT_RUN_DIR = "megaagent-run"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="megaagent", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run a meta-prompt")
    run.add_argument("--meta", required=True, help="meta-prompt text file")
    run.add_argument("--backend", choices=["scripted", "http"], default="scripted")
    run.add_argument("--scenario", help="scripted scenario (JSON)")
    run.add_argument(
        "--workspace",
        default=DEFAULT_RUN_DIR,
        help="run directory (default: %(default)s)",
    )
    run.add_argument("--config", help="configuration file (JSON)")
    run.add_argument(
        "--log", help="event log (JSONL, default: <workspace>/log.jsonl)"
    )
    run.add_argument("--serial", action="store_true", help="one agent at a time")
    run.add_argument(
        "--json", action="store_true", help="print the deliverable as JSON"
    )
    run.set_defaults(handler=cmd_run)

    for name, handler, text in (
        ("replay", cmd_replay, "check an event log"),
        ("report", cmd_report, "print the stage table and hierarchy of a log"),
    ):
        command = sub.add_parser(name, help=text)
        command.add_argument("--log", required=True, help="event log (JSONL)")
        command.add_argument("--json", action="store_true", help="print JSON")
        command.set_defaults(handler=handler)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    return args.handler(args)


def cmd_run(args: argparse.Namespace) -> int:
    profile = "scripted" if args.backend == "scripted" else "live"
    try:
        if args.config:
            config = Config.from_file(args.config, profile=profile)
        else:
            config = Config.from_dict({}, profile=profile)
        meta = MetaPrompt.from_file(args.meta)
    except (OSError, ValueError) as exp:
        return _usage(str(exp))
    if args.serial:
        config.runtime.serial = True

    if args.backend == "scripted":
        if not args.scenario:
            return _usage("the scripted backend needs --scenario")
        try:
            backend = ScriptedBackend(ScriptedScenario.from_file(args.scenario))
        except (OSError, ValueError, MegaAgentError) as exp:
            return _usage(f"{args.scenario}: {exp}")
    else:
        if not config.http.endpoint or not config.http.api_key:
            return _usage("the http backend needs an endpoint and MEGA_API_KEY")
        backend = HTTPBackend(config.http)

    try:
        orchestrator = Orchestrator(
            config, backend, run_dir=args.workspace, log_path=args.log
        )
        deliverable = orchestrator.run(meta)
    finally:
        backend.close()

    if args.json:
        print(json.dumps(deliverable.json(), indent=2, ensure_ascii=False))
    else:
        print(f"status: {deliverable.status}")
        for f in deliverable.files:
            print(f"{f.hash[:12]}  {f.path}")
        print()
        print(deliverable.ledger.table(), end="")
    if not deliverable.complete:
        print(f"megaagent: run aborted: {deliverable.diagnostic}", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_replay(args: argparse.Namespace) -> int:
    try:
        records, truncated = load_log(args.log)
    except MegaAgentError as exp:
        return _usage(str(exp))
    if not records and truncated is None:
        print("no events")
        return EXIT_OK

    result = replay(records, truncated)
    if args.json:
        print(
            json.dumps(
                {
                    "ok": result.ok,
                    "events": len(records),
                    "transitions": result.transitions,
                    "violations": [
                        {"line": v.line, "message": v.message}
                        for v in result.violations
                    ],
                },
                indent=2,
            )
        )
    else:
        for line in result.transitions:
            print(line)
    for violation in result.violations:
        print(f"megaagent: {violation}", file=sys.stderr)
    return EXIT_OK if result.ok else EXIT_USAGE


def cmd_report(args: argparse.Namespace) -> int:
    try:
        records, truncated = load_log(args.log)
    except MegaAgentError as exp:
        return _usage(str(exp))
    if truncated is not None:
        print(f"megaagent: {truncated}", file=sys.stderr)
        return EXIT_USAGE
    if not records:
        print("no events")
        return EXIT_OK

    result = replay(records)
    report = result.stage_report()
    summary = result.summary()
    if args.json:
        print(
            json.dumps({"stages": report.json(), "hierarchy": summary.json()}, indent=2)
        )
    else:
        print(report.table(), end="")
        print()
        print("\n".join(summary.lines()))
    return EXIT_OK


def _usage(message: str) -> int:
    print(f"megaagent: {message}", file=sys.stderr)
    return EXIT_USAGE
