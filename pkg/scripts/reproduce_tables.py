"""Size/power experiments over the standard simulation designs.

Each preset expands to an experiment configuration (model cells x tests) and
writes one results CSV.  Rates are in percent with Monte Carlo standard errors.

    python scripts/reproduce_tables.py --preset comparison --reps 2000 --out results/
    python scripts/reproduce_tables.py --preset all --reps 500 --out results/   # quicker, noisier
    python scripts/reproduce_tables.py --preset rapid --dump-config rapid.json  # config only
"""

import argparse
import json
import logging
import time
from pathlib import Path

from memchange.app import ExperimentConfig, TestSpec, expand_grid, format_results, run_experiment
from memchange.core_stats import StatKind, TestingInterval
from memchange.quantiles import TableStore

log = logging.getLogger("reproduce_tables")

SMALL_D = (0.0, 0.1, 0.2, 0.3, 0.4)
WIDE_D = SMALL_D + (0.6, 0.8, 1.0, 1.2, 1.4)
TAUS = (0.05, 0.1, 0.2)


def tests(functionals=("I",), estimators=("variance",), trend=False, taus=TAUS):
    return tuple(
        TestSpec(StatKind(f, e), TestingInterval.symmetric(t), 0.05, trend)
        for e in estimators for f in functionals for t in taus
    )


def preset_cells(name, n):
    """Model cells and tests of one design; ``d1 <= d2`` throughout."""
    if name == "comparison":  # all six statistics, small d
        return expand_grid("abrupt", n, SMALL_D), tests(("W", "R", "I"), ("variance", "kim"))
    if name == "memory_range":  # I over stationary and non-stationary d
        return expand_grid("abrupt", n, WIDE_D), tests()
    if name == "ar_positive":
        return expand_grid("abrupt", n, WIDE_D, ar_coeff=0.7), tests()
    if name == "ar_negative":
        return expand_grid("abrupt", n, WIDE_D, ar_coeff=-0.7), tests()
    if name == "rapid":  # linear memory path d1 + (d2 - d1) tau
        return expand_grid("rapid", n, WIDE_D), tests()
    if name == "detrended":  # de-trended I on trend-free data
        return expand_grid("abrupt", n, WIDE_D), tests(trend=True)
    if name == "trend":  # de-trended I on data with a linear trend
        slope = 0.01 if n <= 500 else 0.001
        return expand_grid("abrupt", n, WIDE_D, trend=(1.0, slope)), tests(trend=True)
    raise ValueError(f"unknown preset {name!r}")


PRESETS = ("comparison", "memory_range", "ar_positive", "ar_negative", "rapid", "detrended", "trend")


def config_dict(name, n, reps, seed):
    cells, test_specs = preset_cells(name, n)
    return {
        "cells": [c.to_dict() for c in cells],
        "tests": [t.to_dict() for t in test_specs],
        "replications": reps,
        "master_seed": seed,
    }


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--preset", choices=PRESETS + ("all",), default="comparison")
    parser.add_argument("--n", type=int, default=500)
    parser.add_argument("--reps", type=int, default=2000)
    parser.add_argument("--seed", type=int, default=20240917)
    parser.add_argument("--out", type=Path, default=Path("results"))
    parser.add_argument("--tables", type=Path, help="quantile table directory (default: shipped)")
    parser.add_argument("--dump-config", type=Path, help="write the experiment JSON and exit")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    names = PRESETS if args.preset == "all" else (args.preset,)
    if args.dump_config:
        if len(names) != 1:
            parser.error("--dump-config needs a single preset")
        data = config_dict(names[0], args.n, args.reps, args.seed)
        args.dump_config.write_text(json.dumps(data, indent=2) + "\n")
        return 0

    args.out.mkdir(parents=True, exist_ok=True)
    store = TableStore(args.tables)
    for name in names:
        cfg = ExperimentConfig.from_dict(config_dict(name, args.n, args.reps, args.seed))
        start = time.perf_counter()
        rows = run_experiment(
            cfg, store, progress=lambda i, total: log.info("%s: cell %d/%d", name, i, total)
        )
        path = args.out / f"{name}_n{args.n}.csv"
        path.write_text(format_results(rows), encoding="utf-8", newline="\n")
        log.info("%s: wrote %s (%.0fs)", name, path, time.perf_counter() - start)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
