"""Command-line interface.

Subcommands: run (full pipeline), feedback (mutate a previous run and
rerun), select-gauge (standalone rule engine), make-fixture (synthetic
demo basin). Exit codes: 0 success, 2 request error, 3 data error,
4 simulation error.
"""

import argparse
import sys
from datetime import datetime, timedelta
from pathlib import Path

from . import fixtures, gauges, pipeline
from .errors import (
    AmbiguousHintError,
    BasinflowError,
    DataRangeError,
    DirectiveError,
    MissingDataError,
    NoViableGaugeError,
    ParseError,
    RequestParseError,
    ShapeError,
    StepError,
)
from .forcing import TimeWindow

EXIT_OK = 0
EXIT_REQUEST = 2
EXIT_DATA = 3
EXIT_SIMULATION = 4

_REQUEST_ERRORS = (RequestParseError, DirectiveError, AmbiguousHintError, StepError)
_DATA_ERRORS = (MissingDataError, ParseError, DataRangeError, ShapeError,
                NoViableGaugeError)


def _exit_code(exc):
    if isinstance(exc, _REQUEST_ERRORS):
        return EXIT_REQUEST
    if isinstance(exc, _DATA_ERRORS):
        return EXIT_DATA
    return EXIT_SIMULATION


def _parse_datetime(text):
    value = datetime.fromisoformat(text)
    return value


def _parse_overrides(pairs):
    overrides = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise RequestParseError(f"--set expects name=value, got {pair!r}")
        name, _, value = pair.partition("=")
        try:
            overrides[name.strip()] = float(value)
        except ValueError:
            raise RequestParseError(f"--set value for {name!r} is not numeric: {value!r}")
    return overrides


def cmd_run(args):
    defaults = {
        "basin": args.basin,
        "dt": args.dt,
        "data_root": args.data_root,
        "gauge_hint": args.gauge,
        "decider": args.decider,
        "overrides": _parse_overrides(args.set),
    }
    if args.start:
        defaults["start"] = _parse_datetime(args.start)
    if args.end:
        defaults["end"] = _parse_datetime(args.end)

    if args.prompt:
        req = pipeline.parse_request(args.prompt, defaults)
    else:
        if not (args.basin and args.start and args.end):
            raise RequestParseError(
                "without --prompt, --basin/--start/--end are all required")
        req = pipeline.SimulationRequest(
            basin=args.basin,
            window=TimeWindow(start=defaults["start"], end=defaults["end"], dt=args.dt),
            data_root=Path(args.data_root),
            gauge_hint=args.gauge,
            overrides=defaults["overrides"],
            decider=args.decider,
        )
    out_dir = Path(args.out) if args.out else Path.cwd() / "basinflow_run"
    result = pipeline.run_pipeline(req, out_dir)
    print(f"run complete: {result / 'report.md'}")
    return EXIT_OK


def cmd_feedback(args):
    directives = []
    for pair in args.set or []:
        if "=" not in pair:
            raise DirectiveError(f"--set expects name=value, got {pair!r}")
        name, _, value = pair.partition("=")
        try:
            number = float(value)
        except ValueError:
            raise DirectiveError(f"--set value for {name!r} is not numeric: {value!r}")
        directives.append(pipeline.FeedbackDirective(
            kind="set_param", name=name.strip(), value=number))
    if args.gauge:
        directives.append(pipeline.FeedbackDirective(kind="set_gauge", gauge_id=args.gauge))
    if args.extend_end:
        directives.append(pipeline.FeedbackDirective(
            kind="extend_window", new_end=_parse_datetime(args.extend_end)))
    if not directives:
        directives.append(pipeline.FeedbackDirective(kind="rerun"))

    req = pipeline.apply_feedback(args.run, directives)
    out_dir = Path(args.out) if args.out else Path(args.run).parent.with_name(
        Path(args.run).parent.name + "_feedback")
    result = pipeline.run_pipeline(req, out_dir)
    print(f"feedback run complete: {result / 'report.md'}")
    return EXIT_OK


def cmd_select_gauge(args):
    candidates = gauges.load_gauges(args.gauges)
    result = gauges.select_outlet(candidates, user_hint=args.hint)
    print(gauges.render_selection(result))
    return EXIT_OK


def cmd_make_fixture(args):
    basin_dir, start = fixtures.write_basin_fixture(
        args.out, name=args.name, rows=args.size, cols=args.size,
        steps=args.steps, seed=args.seed)
    end = start + timedelta(seconds=3600 * args.steps)
    print(f"fixture written: {basin_dir}")
    print(f"example: basinflow run --basin {args.name} "
          f"--start {start.isoformat()} --end {end.isoformat()} "
          f"--data-root {args.out} --out ./out")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="basinflow",
        description="Terrain-to-report rainfall-runoff simulation pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute the full pipeline")
    run.add_argument("--prompt", help="free-form request line")
    run.add_argument("--basin", help="basin / fixture name")
    run.add_argument("--start", help="window start (ISO datetime)")
    run.add_argument("--end", help="window end (ISO datetime)")
    run.add_argument("--dt", type=int, default=3600, help="step seconds (default 3600)")
    run.add_argument("--data-root", default=".", help="fixture root directory")
    run.add_argument("--out", help="output directory")
    run.add_argument("--gauge", help="gauge hint (rule 0)")
    run.add_argument("--decider", default="none",
                     help="parameter decider: none, exec:PATH, or http:URL")
    run.add_argument("--set", action="append", metavar="NAME=VALUE",
                     help="parameter override (repeatable)")
    run.set_defaults(func=cmd_run)

    feedback = sub.add_parser("feedback", help="adjust a previous run and rerun")
    feedback.add_argument("--run", required=True, help="path to run_manifest.txt")
    feedback.add_argument("--set", action="append", metavar="NAME=VALUE",
                          help="parameter override (repeatable)")
    feedback.add_argument("--gauge", help="switch outlet gauge (rule 0 hint)")
    feedback.add_argument("--extend-end", help="new window end (ISO datetime)")
    feedback.add_argument("--out", help="output directory")
    feedback.set_defaults(func=cmd_feedback)

    select = sub.add_parser("select-gauge", help="run the outlet rule engine")
    select.add_argument("--gauges", required=True, help="gauge inventory CSV")
    select.add_argument("--hint", help="user gauge hint")
    select.set_defaults(func=cmd_select_gauge)

    fixture = sub.add_parser("make-fixture", help="write a synthetic demo basin")
    fixture.add_argument("--out", required=True, help="fixture root directory")
    fixture.add_argument("--name", default=fixtures.DEFAULT_BASIN_NAME)
    fixture.add_argument("--size", type=int, default=20, help="grid rows = cols")
    fixture.add_argument("--steps", type=int, default=72, help="hourly steps")
    fixture.add_argument("--seed", type=int, default=7)
    fixture.set_defaults(func=cmd_make_fixture)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except BasinflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_REQUEST


if __name__ == "__main__":
    sys.exit(main())
