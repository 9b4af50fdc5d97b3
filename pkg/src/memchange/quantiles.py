"""Monte Carlo quantile tables of the limit statistics.

A table holds upper quantiles ``q(alpha, d)`` of one statistic variant for one
(functional, fBm type, testing interval) combination.  Files group all
statistic variants that were computed from the same simulated paths: a CSV
body plus a JSON sidecar carrying build metadata, schema version and a CRC32
of the body.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import warnings
import zlib
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .core_stats import DIRECTIONS, FUNCTIONALS, StatKind, TestingInterval
from .errors import ChecksumError, MissingTable, SchemaError, TableError
from .limits import DEFAULT_GRID, LIMIT_FUNCTIONALS, functional_profiles, simulate_paths
from .limits import statistics_from_profiles
from .models import RngStream

SCHEMA_VERSION = 1
BUILD_VERSION = "1.0"
TABLE_ENV = "MEMCHANGE_TABLES"
CSV_COLUMNS = (
    "statistic", "functional", "fbm_type", "tau_low", "tau_high", "d", "alpha", "quantile", "mc_se",
)
DEFAULT_D_GRID = tuple(
    [round(-0.45 + 0.05 * i, 2) for i in range(19)] + [round(0.55 + 0.05 * i, 2) for i in range(19)]
)
DEFAULT_ALPHAS = (0.01, 0.025, 0.05, 0.10)
ALL_KINDS = tuple((f, d) for f in FUNCTIONALS for d in DIRECTIONS)
_SUFFIX = {"increase": "", "decrease": "_dec", "two_sided_sum": "_sum", "two_sided_max": "_max"}
_FBM_CODE = {"typeI": 1, "typeII": 2}


def statistic_name(functional, direction):
    """Short label such as ``I``, ``W_dec``, ``R_sum`` or ``I_max``."""
    return functional + _SUFFIX[direction]


def parse_statistic_name(name):
    for direction, suffix in _SUFFIX.items():
        base = name[: len(name) - len(suffix)] if suffix else name
        if suffix and not name.endswith(suffix):
            continue
        if base in FUNCTIONALS:
            return base, direction
    raise ValueError(f"unknown statistic name {name!r}")


def functional_for(kind, trend=False):
    """Limit functional that matches a finite-sample statistic."""
    if trend:
        return "Q_trend"
    return "Q" if kind.estimator == "variance" else "Q_tilde"


@dataclass(frozen=True)
class TableKey:
    statistic: str
    functional: str
    fbm_type: str
    tau_low: float
    tau_high: float

    def __post_init__(self):
        parse_statistic_name(self.statistic)
        if self.functional not in LIMIT_FUNCTIONALS:
            raise ValueError(f"functional must be one of {LIMIT_FUNCTIONALS}")
        if self.fbm_type not in _FBM_CODE:
            raise ValueError("fbm_type must be typeI or typeII")
        object.__setattr__(self, "tau_low", round(float(self.tau_low), 6))
        object.__setattr__(self, "tau_high", round(float(self.tau_high), 6))

    @classmethod
    def for_test(cls, kind, interval, trend=False, fbm_type="typeI"):
        return cls(
            statistic_name(kind.functional, kind.direction),
            functional_for(kind, trend),
            fbm_type,
            interval.tau_low,
            interval.tau_high,
        )

    @property
    def interval(self):
        return TestingInterval(self.tau_low, self.tau_high)

    def __str__(self):
        return (
            f"statistic={self.statistic} functional={self.functional} fbm={self.fbm_type} "
            f"interval=[{self.tau_low}, {self.tau_high}]"
        )


@dataclass(frozen=True)
class Lookup:
    value: float
    d_used: float
    warnings: tuple = ()


@dataclass
class QuantileTable:
    key: TableKey
    d_grid: np.ndarray
    alpha_grid: np.ndarray
    values: np.ndarray
    se: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.d_grid = np.asarray(self.d_grid, dtype=float)
        self.alpha_grid = np.asarray(self.alpha_grid, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.se is not None:
            self.se = np.asarray(self.se, dtype=float)
        validate_d_grid(self.d_grid)
        if np.any(np.diff(self.alpha_grid) <= 0) or not np.all(
            (self.alpha_grid > 0) & (self.alpha_grid < 1)
        ):
            raise TableError("alpha grid must be increasing inside (0, 1)")
        if self.values.shape != (self.d_grid.size, self.alpha_grid.size):
            raise TableError("values must have shape (len(d_grid), len(alpha_grid))")

    def __eq__(self, other):
        if not isinstance(other, QuantileTable):
            return NotImplemented
        same_se = (self.se is None and other.se is None) or (
            self.se is not None and other.se is not None and np.array_equal(self.se, other.se)
        )
        return (
            self.key == other.key
            and np.array_equal(self.d_grid, other.d_grid)
            and np.array_equal(self.alpha_grid, other.alpha_grid)
            and np.array_equal(self.values, other.values)
            and same_se
            and self.metadata == other.metadata
        )

    def alpha_index(self, alpha):
        hit = np.flatnonzero(np.isclose(self.alpha_grid, alpha, rtol=0, atol=1e-12))
        if hit.size == 0:
            raise MissingTable(
                (self.key, alpha),
                f"alpha={alpha} not tabulated for {self.key}; available {self.alpha_grid.tolist()}",
            )
        return int(hit[0])

    def lookup(self, alpha, d_hat):
        return lookup(self, alpha, d_hat)


def validate_d_grid(d_grid):
    d_grid = np.asarray(d_grid, dtype=float)
    if d_grid.ndim != 1 or d_grid.size == 0 or np.any(np.diff(d_grid) <= 0):
        raise TableError("d grid must be a non-empty increasing sequence")
    if np.any(np.isclose(d_grid, 0.5)) or np.any((d_grid <= -0.5) | (d_grid >= 1.5)):
        raise TableError("d grid must lie in (-0.5, 1.5) and exclude 0.5")


def upper_quantile(samples, alphas):
    """Upper empirical quantiles: the order statistic of rank ``ceil((1-alpha) m)``.

    ``nan`` samples (degenerate paths, a probability-zero event) are dropped.
    """
    x = np.sort(np.asarray(samples, dtype=float)[~np.isnan(samples)])
    m = x.size
    if m == 0:
        raise TableError("no finite samples")
    ranks = [min(max(math.ceil((1 - a) * m - 1e-9), 1), m) for a in np.atleast_1d(alphas)]
    return x[np.asarray(ranks) - 1]


def quantile_se(samples, alphas):
    """Monte Carlo standard error of :func:`upper_quantile` from order statistics.

    Uses the distribution-free binomial band: the order statistics one binomial
    standard deviation either side of the target rank span roughly two se.
    """
    x = np.sort(np.asarray(samples, dtype=float)[~np.isnan(samples)])
    m = x.size
    out = []
    for a in np.atleast_1d(alphas):
        centre = (1 - a) * m
        half = math.sqrt(m * a * (1 - a))
        lo = min(max(math.ceil(centre - half), 1), m)
        hi = min(max(math.ceil(centre + half), 1), m)
        out.append((x[hi - 1] - x[lo - 1]) / 2)
    return np.asarray(out)


def _d_code(d):
    return int(round(d * 1000)) + 1000


def simulate_limit_statistics(
    fbm_type, d, functionals, intervals, N=DEFAULT_GRID, path_count=20000, master_seed=0,
    block_size=1000, kinds=ALL_KINDS,
):
    """Draw ``path_count`` limit statistics for every (functional, interval, kind).

    Path ``p`` uses the substream ``(fbm_type, d, p)`` of ``master_seed``, so
    results do not depend on the block size and all functionals share paths.
    Returns ``{(functional, interval, kind): samples}``.
    """
    out = {(fn, iv, k): [] for fn in functionals for iv in intervals for k in kinds}
    for start in range(0, path_count, block_size):
        stop = min(start + block_size, path_count)
        rngs = [
            RngStream(master_seed, (_FBM_CODE[fbm_type], _d_code(d), p)).generator()
            for p in range(start, stop)
        ]
        values = simulate_paths(fbm_type, d, N, rngs).values
        for fn in functionals:
            fwd, bwd = functional_profiles(values, fn)
            for iv in intervals:
                stats = statistics_from_profiles(fwd, bwd, iv, kinds, fn)
                for k in kinds:
                    out[(fn, iv, k)].append(stats[k])
    return {key: np.concatenate(parts) for key, parts in out.items()}


def build_tables(
    functionals=("Q",), fbm_type="typeI", intervals=(TestingInterval.symmetric(0.1),),
    d_grid=DEFAULT_D_GRID, alpha_grid=DEFAULT_ALPHAS, N=DEFAULT_GRID, path_count=20000,
    master_seed=0, kinds=ALL_KINDS, progress=None,
):
    """Quantile tables for every requested (functional, interval, statistic)."""
    if path_count < 1000:
        raise TableError("path_count must be at least 1000")
    validate_d_grid(d_grid)
    alpha_grid = np.asarray(sorted(alpha_grid), dtype=float)
    values, ses = {}, {}
    for i, d in enumerate(d_grid):
        samples = simulate_limit_statistics(
            fbm_type, d, functionals, intervals, N, path_count, master_seed, kinds=kinds
        )
        for key, draw in samples.items():
            values.setdefault(key, []).append(upper_quantile(draw, alpha_grid))
            ses.setdefault(key, []).append(quantile_se(draw, alpha_grid))
        if progress is not None:
            progress(i + 1, len(d_grid), d)
    meta = {
        "N": int(N), "path_count": int(path_count), "master_seed": int(master_seed),
        "build_version": BUILD_VERSION,
    }
    tables = []
    for (fn, iv, (f, dirn)), rows in values.items():
        key = TableKey(statistic_name(f, dirn), fn, fbm_type, iv.tau_low, iv.tau_high)
        tables.append(
            QuantileTable(key, d_grid, alpha_grid, np.array(rows), np.array(ses[(fn, iv, (f, dirn))]), dict(meta))
        )
    return tables


def build_table(key, d_grid=DEFAULT_D_GRID, alpha_grid=DEFAULT_ALPHAS, N=DEFAULT_GRID,
                path_count=20000, master_seed=0):
    """Single table for ``key`` (see :func:`build_tables`)."""
    kind = parse_statistic_name(key.statistic)
    (table,) = build_tables(
        (key.functional,), key.fbm_type, (key.interval,), d_grid, alpha_grid, N, path_count,
        master_seed, kinds=(kind,),
    )
    return table


# -- lookup ------------------------------------------------------------------


def lookup(table, alpha, d_hat):
    """Quantile at ``alpha`` interpolated linearly in ``d_hat``.

    Interpolation never crosses the excluded neighbourhood of 1/2: a ``d_hat``
    inside the gap snaps to the nearest edge, one outside the grid is clamped;
    both cases are reported in ``warnings``.
    """
    col = table.values[:, table.alpha_index(alpha)]
    grid = table.d_grid
    if not np.isfinite(d_hat):
        raise ValueError("d_hat must be finite")
    notes = []
    d = float(d_hat)
    if d < grid[0] or d > grid[-1]:
        d = float(np.clip(d, grid[0], grid[-1]))
        notes.append(f"d_hat={d_hat:.4f} outside table range; clamped to {d:.4f}")
    below, above = grid[grid < 0.5], grid[grid > 0.5]
    if below.size and above.size and below[-1] < d < above[0]:
        edge = below[-1] if d - below[-1] < above[0] - d else above[0]
        notes.append(f"d_hat={d_hat:.4f} inside the gap around 0.5; snapped to {edge:.4f}")
        d = float(edge)
    side = grid < 0.5 if d < 0.5 else grid > 0.5
    value = float(np.interp(d, grid[side], col[side]))
    for note in notes:
        warnings.warn(note, stacklevel=2)
    return Lookup(value, d, tuple(notes))


# -- persistence -------------------------------------------------------------


def _csv_body(tables):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for t in tables:
        k = t.key
        for i, d in enumerate(t.d_grid):
            for j, a in enumerate(t.alpha_grid):
                se = "" if t.se is None else repr(float(t.se[i, j]))
                writer.writerow([
                    k.statistic, k.functional, k.fbm_type, repr(k.tau_low), repr(k.tau_high),
                    repr(float(d)), repr(float(a)), repr(float(t.values[i, j])), se,
                ])
    return buf.getvalue()


def sidecar_path(path):
    return Path(path).with_suffix(".json")


def save_tables(tables, path):
    """Write tables sharing one build to ``path`` (CSV) plus its JSON sidecar."""
    tables = list(tables)
    if not tables:
        raise TableError("nothing to save")
    meta = tables[0].metadata
    if any(t.metadata != meta for t in tables):
        raise TableError("tables saved together must share build metadata")
    body = _csv_body(tables).encode("utf-8")
    path = Path(path)
    path.write_bytes(body)
    sidecar = {
        "schema_version": SCHEMA_VERSION,
        "crc32": zlib.crc32(body),
        "columns": list(CSV_COLUMNS),
        "metadata": meta,
    }
    sidecar_path(path).write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")


def save_table(table, path):
    save_tables([table], path)


def load_tables(path):
    path = Path(path)
    try:
        sidecar = json.loads(sidecar_path(path).read_text())
    except FileNotFoundError:
        raise TableError(f"missing sidecar {sidecar_path(path)}") from None
    except json.JSONDecodeError as exc:
        raise SchemaError(f"unreadable sidecar {sidecar_path(path)}: {exc}") from None
    if sidecar.get("schema_version") != SCHEMA_VERSION:
        raise SchemaError(
            f"{path}: schema version {sidecar.get('schema_version')} != supported {SCHEMA_VERSION}"
        )
    body = path.read_bytes()
    if zlib.crc32(body) != sidecar.get("crc32"):
        raise ChecksumError(f"{path}: checksum mismatch, file is corrupt or was edited")
    rows = list(csv.DictReader(io.StringIO(body.decode("utf-8"))))
    if not rows or tuple(rows[0].keys()) != CSV_COLUMNS:
        raise SchemaError(f"{path}: unexpected columns")
    grouped = {}
    for r in rows:
        key = TableKey(r["statistic"], r["functional"], r["fbm_type"],
                       float(r["tau_low"]), float(r["tau_high"]))
        grouped.setdefault(key, []).append(r)
    tables = []
    for key, rs in grouped.items():
        d_grid = sorted({float(r["d"]) for r in rs})
        alphas = sorted({float(r["alpha"]) for r in rs})
        vals = np.full((len(d_grid), len(alphas)), np.nan)
        se = np.full_like(vals, np.nan)
        for r in rs:
            i, j = d_grid.index(float(r["d"])), alphas.index(float(r["alpha"]))
            vals[i, j] = float(r["quantile"])
            se[i, j] = float(r["mc_se"]) if r["mc_se"] else np.nan
        if np.isnan(vals).any():
            raise SchemaError(f"{path}: incomplete grid for {key}")
        tables.append(QuantileTable(key, d_grid, alphas, vals,
                                    None if np.isnan(se).all() else se, dict(sidecar["metadata"])))
    return tables


def load_table(path):
    tables = load_tables(path)
    if len(tables) != 1:
        raise TableError(f"{path} holds {len(tables)} tables; use load_tables")
    return tables[0]


def file_name(functional, fbm_type, interval):
    return f"{functional}_{fbm_type}_{interval.tau_low:g}_{interval.tau_high:g}.csv"


def default_table_dir():
    env = os.environ.get(TABLE_ENV)
    if env:
        return Path(env)
    return Path(str(resources.files("memchange") / "data" / "tables"))


class TableStore:
    """All tables found in a directory, indexed by :class:`TableKey`."""

    def __init__(self, directory=None):
        self.directory = Path(directory) if directory is not None else default_table_dir()
        self._tables = None

    def _load(self):
        if self._tables is None:
            tables = {}
            if self.directory.is_dir():
                for csv_path in sorted(self.directory.glob("*.csv")):
                    for t in load_tables(csv_path):
                        tables[t.key] = t
            self._tables = tables
        return self._tables

    def keys(self):
        return list(self._load())

    def get(self, key):
        try:
            return self._load()[key]
        except KeyError:
            raise MissingTable(
                key, f"no quantile table for {key} in {self.directory}; "
                "build one with `memchange table build`"
            ) from None

    def quantile(self, key, alpha, d_hat):
        return lookup(self.get(key), alpha, d_hat)
