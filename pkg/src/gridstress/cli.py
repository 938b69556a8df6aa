"""``gridstress`` command line.

Exit codes
----------
0  success (including "trigger not met")
2  usage error: bad flags, unknown branch or bus reference
3  case file could not be parsed
4  infeasible analysis: dispatch limits, islanding, singular network
5  switching search found no candidate
6  switching candidate list depleted without an improving action
7  input/output error
"""
from __future__ import annotations

import argparse
import logging
import os
import sys

from .errors import CaseFormatError, GridStressError, InfeasibleError, InvalidNetworkError, NoContingenciesError
from .metrics import LimitSet
from .scenario import Scenario, ScenarioConfig, chart_csv, emit, format_table, ieee118_scenarios, run

EXIT_OK, EXIT_USAGE, EXIT_PARSE, EXIT_INFEASIBLE, EXIT_NO_CANDIDATE, EXIT_DEPLETED, EXIT_IO = 0, 2, 3, 4, 5, 6, 7


def _pairs(text: str, what: str) -> dict[int, float]:
    out = {}
    for item in filter(None, (p.strip() for p in text.split(","))):
        key, sep, value = item.partition("=")
        if not sep:
            raise argparse.ArgumentTypeError(f"{what}: expected ID=VALUE, got {item!r}")
        try:
            out[int(key)] = float(value)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{what}: expected ID=VALUE, got {item!r}") from None
    return out


def _ids(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(p) for p in text.split(",") if p.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated branch ids, got {text!r}") from None


def _scenario_arg(text: str) -> tuple[str, float]:
    label, sep, value = text.rpartition(":")
    try:
        if not sep or not label:
            raise ValueError
        return label, float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LABEL:SCALE, got {text!r}") from None


def _budget(text: str) -> int | None:
    if text.lower() == "all":
        return None
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"budget must be a positive integer or 'all', got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError("budget must be at least 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("case", help="case file (.m or .json) or builtin:NAME, e.g. builtin:case118")
    load = common.add_argument_group("loading")
    load.add_argument("--scale", type=float, default=1.0, help="uniform load factor (default 1.0)")
    load.add_argument("--bus-scale", type=lambda s: _pairs(s, "--bus-scale"), default={},
                      metavar="ID=FACTOR,...", help="per-bus load factors, replacing --scale at those buses")
    load.add_argument("--bus-increase", type=lambda s: _pairs(s, "--bus-increase"), default={},
                      metavar="ID=PCT,...", help="per-bus load increase in percent on top of --scale")
    load.add_argument("--label", help="row label for the single scenario (default: the load factor)")
    load.add_argument("--scenario", type=_scenario_arg, action="append", default=[], metavar="LABEL:SCALE",
                      help="add a uniform-loading scenario (repeatable)")
    load.add_argument("--ieee118-scenarios", action="store_true",
                      help="IEEE 118 loadings 97%%, 105%%, select-bus 106%% and 110%%")
    load.add_argument("--default-rating", type=float, metavar="MW",
                      help="rating for MATPOWER branches with rateA = 0")
    lim = common.add_argument_group("limits and thresholds")
    lim.add_argument("--contingency-limit", type=float, default=1.2, help="fraction of rating (default 1.2)")
    lim.add_argument("--emergency-limit", type=float, default=1.35, help="fraction of rating (default 1.35)")
    lim.add_argument("--degree-threshold", type=float, default=1.0, help="degree loading threshold (default 1.0)")
    lim.add_argument("--system-threshold", type=float, default=1.0, help="system degree threshold (default 1.0)")
    lim.add_argument("--violations", choices=("lines", "cells"), default="lines",
                     help="count violating lines or line/contingency pairs")
    lim.add_argument("--sparsity", type=float, default=0.0, help="drop |LODF| below this value")
    lim.add_argument("--monitor", type=_ids, metavar="IDS", help="monitored branch ids (default: all)")
    lim.add_argument("--outages", type=_ids, metavar="IDS", help="contingency branch ids (default: all)")
    out = common.add_argument_group("output")
    out.add_argument("--out", help="write the report here (default: stdout)")
    out.add_argument("--format", choices=("csv", "json"), default="csv")
    out.add_argument("--no-timestamp", action="store_true",
                     help="omit creation time and timings so identical runs give identical JSON")
    out.add_argument("--chart-data", metavar="PATH", help="also write tidy (scenario, metric, value) CSV")
    out.add_argument("--dump-matrices", metavar="PREFIX", help="write PTDF and LODF per scenario")
    out.add_argument("--matrix-format", choices=("csv", "npz"), default="csv")
    out.add_argument("-q", "--quiet", action="store_true", help="no summary table on stderr")
    out.add_argument("-v", "--verbose", action="store_true")

    search = argparse.ArgumentParser(add_help=False)
    g = search.add_argument_group("switching")
    g.add_argument("--threshold", type=float, help="trigger threshold in percent of rating")
    g.add_argument("--budget", type=_budget, default=20, help="candidates to evaluate, or 'all' (default 20)")

    parser = argparse.ArgumentParser(prog="gridstress", description=__doc__.split("\n")[0],
                                     formatter_class=argparse.RawDescriptionHelpFormatter,
                                     epilog=__doc__.split("\n", 2)[2])
    sub = parser.add_subparsers(dest="mode", required=True)
    sub.add_parser("analyze", parents=[common], help="N-1 stress metrics")
    sub.add_parser("preventive", parents=[common, search], help="base-case switching search")
    corr = sub.add_parser("corrective", parents=[common, search], help="post-contingency switching search")
    corr.add_argument("--contingency", required=True, metavar="FROM-TO|ID|worst",
                      help="outaged branch: id, bus pair, or 'worst' for the highest criticality rank")
    return parser


def config_from_args(args) -> ScenarioConfig:
    if args.ieee118_scenarios:
        if args.scenario or args.bus_scale or args.bus_increase or args.scale != 1.0:
            raise ValueError("--ieee118-scenarios cannot be combined with other loading flags")
        scenarios = ieee118_scenarios()
    elif args.scenario:
        if args.bus_scale or args.bus_increase:
            raise ValueError("--scenario takes uniform loadings only; drop --bus-scale/--bus-increase")
        scenarios = tuple(Scenario(label, scale) for label, scale in args.scenario)
    else:
        overrides = {b: args.scale * (1.0 + pct / 100.0) for b, pct in args.bus_increase.items()}
        clash = set(overrides) & set(args.bus_scale)
        if clash:
            raise ValueError(f"buses {sorted(clash)} given in both --bus-scale and --bus-increase")
        overrides.update(args.bus_scale)
        label = args.label or f"{args.scale * 100:g}%"
        scenarios = (Scenario(label, args.scale, overrides),)
    limits = LimitSet(
        contingency_fraction=args.contingency_limit,
        emergency_fraction=args.emergency_limit,
        degree_threshold_fraction=args.degree_threshold,
        violation_mode=args.violations,
    )
    return ScenarioConfig(
        case=args.case,
        scenarios=scenarios,
        mode=args.mode,
        contingency=getattr(args, "contingency", None),
        limits=limits,
        system_threshold=args.system_threshold,
        sparsity_threshold=args.sparsity,
        monitored=args.monitor,
        outages=args.outages,
        budget=getattr(args, "budget", 20),
        trigger_threshold=getattr(args, "threshold", None),
        default_rating=args.default_rating,
    )


def _describe(report) -> list[str]:
    lines = []
    for res in report.results:
        rec = res.recommendation
        if rec is None:
            continue
        head = f"{res.scenario.label}: "
        if not rec.triggered:
            lines.append(head + "trigger not met, no switching needed")
        elif rec.action is not None:
            verdict = "accepted" if rec.accepted else "best improvement, trigger still active"
            lines.append(head + f"open branch {rec.action.branch} ({verdict}; "
                         f"{rec.triggering_metric} {rec.pre_report.metric(rec.triggering_metric):.4g} -> "
                         f"{rec.post_report.metric(rec.triggering_metric):.4g})")
        else:
            lines.append(head + f"{rec.status} after {len(rec.candidates_evaluated)} candidates "
                         f"(worst branch {rec.worst_branch}, metric {rec.triggering_metric})")
    return lines


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")

    def fail(code, msg):
        print(f"gridstress: error: {msg}", file=sys.stderr)
        return code

    try:
        config = config_from_args(args)
        report = run(config, timestamp=not args.no_timestamp, dump_matrices=args.dump_matrices,
                     matrix_format=args.matrix_format)
        text = emit(report, args.format, args.out)
        if args.out is None:
            try:
                sys.stdout.write(text)
                sys.stdout.flush()
            except BrokenPipeError:
                # reader went away (e.g. piped into head); silence the interpreter's own report
                sys.stdout = open(os.devnull, "w")
        if args.chart_data:
            with open(args.chart_data, "w") as fh:
                fh.write(chart_csv(report))
    except CaseFormatError as exc:
        return fail(EXIT_PARSE, f"cannot parse case: {exc}")
    except (InfeasibleError, NoContingenciesError) as exc:
        return fail(EXIT_INFEASIBLE, str(exc))
    except (InvalidNetworkError, ValueError) as exc:
        return fail(EXIT_USAGE, str(exc))
    except OSError as exc:
        return fail(EXIT_IO, str(exc))
    except GridStressError as exc:
        return fail(EXIT_INFEASIBLE, str(exc))

    if not args.quiet:
        print(format_table(report), file=sys.stderr)
        for line in _describe(report):
            print(line, file=sys.stderr)
    statuses = report.statuses
    if "list-depleted" in statuses:
        return EXIT_DEPLETED
    if "no-candidate" in statuses:
        return EXIT_NO_CANDIDATE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
