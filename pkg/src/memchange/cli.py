"""Command line interface: ``memchange {simulate,detect,table,experiment}``.

Exit codes: 0 success, 1 usage error, 2 data, degeneracy or missing-table error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .app import ExperimentConfig, TestSpec, format_results, read_series, run_experiment, run_test
from .app import format_series
from .core_stats import DIRECTIONS, FUNCTIONALS, StatKind, TestingInterval
from .errors import MemchangeError
from .limits import DEFAULT_GRID, LIMIT_FUNCTIONALS
from .models import ModelSpec
from .quantiles import DEFAULT_ALPHAS, DEFAULT_D_GRID, TableStore, build_tables, file_name
from .quantiles import save_tables

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def build_parser():
    parser = _Parser(prog="memchange", description="Tests for a change in memory (long-range dependence).")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sim = sub.add_parser("simulate", help="simulate a series from a model specification (JSON)")
    sim.add_argument("--spec", required=True, type=Path)
    sim.add_argument("--seed", type=int, help="overrides the seed in the specification")
    sim.add_argument("--out", type=Path, help="output CSV (default: stdout)")

    det = sub.add_parser("detect", help="test a series for an increase in memory")
    det.add_argument("--input", required=True, type=Path)
    det.add_argument("--stat", choices=FUNCTIONALS, default="I")
    det.add_argument("--estimator", choices=("variance", "kim"), default="variance")
    det.add_argument("--direction", choices=DIRECTIONS, default="increase")
    det.add_argument("--tau-low", type=float, default=0.05)
    det.add_argument("--tau-high", type=float)
    det.add_argument("--alpha", type=float, default=0.05)
    det.add_argument("--trend", action="store_true", help="use the de-trended statistic")
    det.add_argument("--bandwidth", type=int)
    det.add_argument("--oracle-d", type=float, help="use this d instead of estimating it")
    det.add_argument("--tables", type=Path, help="table directory (default: $MEMCHANGE_TABLES or shipped)")

    tab = sub.add_parser("table", help="build or inspect quantile tables")
    tsub = tab.add_subparsers(dest="table_command", required=True, parser_class=_Parser)
    build = tsub.add_parser("build")
    build.add_argument("--out", required=True, type=Path)
    build.add_argument("--functional", choices=LIMIT_FUNCTIONALS, action="append")
    build.add_argument("--fbm-type", choices=("typeI", "typeII"), default="typeI")
    build.add_argument("--tau-low", type=_floats, default=[0.05])
    build.add_argument("--d-grid", type=_floats, default=list(DEFAULT_D_GRID))
    build.add_argument("--alphas", type=_floats, default=list(DEFAULT_ALPHAS))
    build.add_argument("--grid-size", type=int, default=DEFAULT_GRID)
    build.add_argument("--paths", type=int, default=20000)
    build.add_argument("--seed", type=int, default=0)
    inspect = tsub.add_parser("inspect")
    inspect.add_argument("--tables", type=Path)
    inspect.add_argument("--statistic", help="only show this statistic label (e.g. I, W_dec)")

    exp = sub.add_parser("experiment", help="run a size/power experiment (JSON config)")
    exp.add_argument("--config", required=True, type=Path)
    exp.add_argument("--out", type=Path, help="results CSV (default: config output or stdout)")
    exp.add_argument("--tables", type=Path)
    return parser


def _simulate(args):
    spec = ModelSpec.from_json(args.spec.read_text())
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    text = format_series(spec.simulate())
    if args.out:
        args.out.write_text(text, encoding="utf-8", newline="\n")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _detect(args):
    interval = (TestingInterval.symmetric(args.tau_low) if args.tau_high is None
                else TestingInterval(args.tau_low, args.tau_high))
    spec = TestSpec(StatKind(args.stat, args.estimator, args.direction), interval, args.alpha,
                    args.trend, bandwidth=args.bandwidth, oracle_d=args.oracle_d)
    report = run_test(read_series(args.input), spec, TableStore(args.tables))
    print(report.to_json())
    return EXIT_DATA if report.degenerate else EXIT_OK


def _table(args):
    if args.table_command == "build":
        args.out.mkdir(parents=True, exist_ok=True)
        functionals = tuple(args.functional or ["Q"])
        intervals = [TestingInterval.symmetric(t) for t in args.tau_low]
        tables = build_tables(functionals, args.fbm_type, intervals, tuple(args.d_grid), args.alphas,
                              args.grid_size, args.paths, args.seed)
        for fn in functionals:
            for iv in intervals:
                group = [t for t in tables if t.key.functional == fn and t.key.interval == iv]
                save_tables(group, args.out / file_name(fn, args.fbm_type, iv))
        print(f"wrote {len(tables)} tables to {args.out}")
        return EXIT_OK
    store = TableStore(args.tables)
    keys = sorted(store.keys(), key=lambda k: (k.functional, k.fbm_type, k.tau_low, k.statistic))
    if not keys:
        print(f"no tables in {store.directory}", file=sys.stderr)
        return EXIT_DATA
    for key in keys:
        if args.statistic and key.statistic != args.statistic:
            continue
        t = store.get(key)
        print(f"{key}  N={t.metadata.get('N')} paths={t.metadata.get('path_count')}")
        print("    d     " + "  ".join(f"a={a:<6g}" for a in t.alpha_grid))
        for d, row in zip(t.d_grid, t.values):
            print(f"  {d:5.2f}  " + "  ".join(f"{v:8.4f}" for v in row))
    return EXIT_OK


def _experiment(args):
    cfg = ExperimentConfig.from_json(args.config.read_text())
    if args.tables is not None:
        cfg = replace(cfg, tables=str(args.tables))
    if args.out is not None:
        cfg = replace(cfg, output=str(args.out))
    rows = run_experiment(cfg)
    if not cfg.output:
        sys.stdout.write(format_results(rows))
    return EXIT_DATA if any(r["error"] for r in rows) else EXIT_OK


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # usage errors and --help
        return exc.code
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    handlers = {"simulate": _simulate, "detect": _detect, "table": _table, "experiment": _experiment}
    try:
        return handlers[args.command](args)
    except (MemchangeError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"memchange: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
