"""Command line entry point: ``orbit-shift run <scenario.json>``."""

import argparse
import json
import sys
from pathlib import Path

from . import scenario
from .errors import FlowError, OrbitShiftError

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERIC = 3


def _emit(text, out):
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _numeric_record(exc):
    rec = {"type": type(exc).__name__, "message": str(exc)}
    for attr in ("stage", "point", "witness", "subexpression"):
        v = getattr(exc, attr, None)
        if v is not None:
            rec[attr] = v
    return rec


def cmd_run(args) -> int:
    try:
        doc = scenario.load(args.scenario)
        report = scenario.run(doc)
    except scenario.ScenarioError as exc:
        errors = [{"path": p, "message": m} for p, m in exc.errors]
        _emit(json.dumps({"status": "validation_error", "errors": errors}, indent=2) + "\n", args.out)
        print(f"orbit-shift: invalid scenario: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (FlowError, OrbitShiftError, ArithmeticError) as exc:
        _emit(json.dumps({"status": "numeric_failure", "error": _numeric_record(exc)}, indent=2) + "\n",
              args.out)
        print(f"orbit-shift: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    fmt = args.format or doc.get("format", "json")
    _emit(report.render(fmt), args.out)
    if not report.ok:
        print("orbit-shift: verification failed", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="orbit-shift",
                                     description="Shift-maps along orbits of vector fields.")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="execute a scenario file")
    run.add_argument("scenario", help="path to a JSON scenario")
    run.add_argument("--out", help="write the report here instead of stdout")
    run.add_argument("--format", choices=["json", "csv"], help="override the scenario's output format")
    run.set_defaults(func=cmd_run)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
