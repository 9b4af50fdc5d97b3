"""Build the shipped quantile tables.

Type I tables cover the variance, Kim and de-trended functionals at
tau_low in {0.05, 0.1, 0.2}; type II tables cover the variance functional at
tau_low = 0.1 (used for the type I / type II comparison).

    python scripts/build_tables.py --out src/memchange/data/tables
    python scripts/build_tables.py --paths 2000 --out /tmp/tables   # quick
"""

import argparse
import logging
import time
from pathlib import Path

from memchange.core_stats import TestingInterval
from memchange.quantiles import build_tables, file_name, save_tables

log = logging.getLogger("build_tables")


def build_group(functionals, fbm_type, tau_lows, args):
    intervals = [TestingInterval.symmetric(t) for t in tau_lows]
    start = time.time()

    def progress(i, total, d):
        log.info("%s %s: d=%.2f done (%d/%d, %.0fs)", fbm_type, ",".join(functionals), d, i, total,
                 time.time() - start)

    tables = build_tables(functionals, fbm_type, intervals, N=args.grid, path_count=args.paths,
                          master_seed=args.seed, progress=progress)
    for fn in functionals:
        for iv in intervals:
            group = [t for t in tables if t.key.functional == fn and t.key.interval == iv]
            path = args.out / file_name(fn, fbm_type, iv)
            save_tables(group, path)
            log.info("wrote %s (%d tables)", path, len(group))


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", type=Path, default=Path("src/memchange/data/tables"))
    parser.add_argument("--paths", type=int, default=20000)
    parser.add_argument("--grid", type=int, default=2048)
    parser.add_argument("--seed", type=int, default=20240601)
    parser.add_argument("--skip-type2", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    args.out.mkdir(parents=True, exist_ok=True)
    build_group(("Q", "Q_tilde", "Q_trend"), "typeI", (0.05, 0.1, 0.2), args)
    if not args.skip_type2:
        build_group(("Q",), "typeII", (0.1,), args)


if __name__ == "__main__":
    main()
