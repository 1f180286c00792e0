"""``allmempro-sim`` command line entry point."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .errors import ParseError
from .scenario import parse, run


def _key_value(text: str) -> tuple[str, str]:
    key, eq, value = text.partition("=")
    if not eq or not key:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    return key, value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="allmempro-sim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a scenario and evaluate its expectations")
    run_p.add_argument("scenario", type=Path)
    run_p.add_argument("--trace", type=Path, help="write the debug trace here")
    run_p.add_argument("--metrics", type=Path, help="write metrics here instead of stdout")
    run_p.add_argument("--json", action="store_true", help="emit metrics as one JSON object")
    run_p.add_argument("--continue-on-error", action="store_true")
    run_p.add_argument("--set", dest="overrides", type=_key_value, action="append", default=[],
                       metavar="KEY=VALUE", help="override a config key (repeatable)")

    check_p = sub.add_parser("check", help="parse a scenario without running it")
    check_p.add_argument("scenario", type=Path)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        text = args.scenario.read_text(encoding="utf-8")
    except OSError as exc:
        print(f"allmempro-sim: {exc}", file=sys.stderr)
        return 2
    try:
        scenario = parse(text, str(args.scenario))
    except ParseError as exc:
        print(f"{args.scenario}:{exc.line}:{exc.column}: {exc.message}", file=sys.stderr)
        return 2

    if args.command == "check":
        print(f"{args.scenario}: {len(scenario.commands)} commands ok")
        return 0

    overrides = list(args.overrides)
    if args.continue_on_error:
        overrides.append(("continue_on_error", "1"))
    try:
        scenario = scenario.with_overrides(overrides)
    except ValueError as exc:
        print(f"allmempro-sim: --set: {exc}", file=sys.stderr)
        return 2

    report = run(scenario)
    if args.trace:
        args.trace.write_text(report.trace_text(), encoding="utf-8")
    metrics = report.metrics_text(as_json=args.json)
    sys.stdout.write(report.summary())
    if args.metrics:
        args.metrics.write_text(metrics, encoding="utf-8")
    else:
        sys.stdout.write(metrics)
    return 0 if report.ok else 1


if __name__ == "__main__":
    raise SystemExit(main())
