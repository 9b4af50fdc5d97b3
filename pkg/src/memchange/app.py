"""End-to-end testing procedure, series I/O and the Monte Carlo experiment harness.

The test rejects "no increase in memory" when the ratio statistic exceeds the
upper ``alpha`` quantile of its limit distribution, evaluated at an estimate
of ``d`` (plug-in).  With ``trend=True`` the de-trended statistic and a
residual-based estimate of ``d`` are used instead.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import logging
import math
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import core_stats, detrend, estimator
from .core_stats import StatKind, TestingInterval
from .errors import ConfigError, DegenerateDenominator, InvalidSeries
from .models import MemoryFunction, ModelSpec, RngStream
from .quantiles import TableKey, TableStore, lookup

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TestSpec:
    """Which statistic to compute and how to calibrate it."""

    kind: StatKind = StatKind()
    interval: TestingInterval = TestingInterval.symmetric(0.05)
    alpha: float = 0.05
    trend: bool = False
    fbm_type: str = "typeI"
    bandwidth: int | None = None
    oracle_d: float | None = None

    __test__ = False  # not a pytest class

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)")

    @property
    def table_key(self):
        return TableKey.for_test(self.kind, self.interval, self.trend, self.fbm_type)

    @property
    def label(self):
        prefix = "trend_" if self.trend else ("kim_" if self.kind.estimator == "kim" else "")
        return prefix + self.table_key.statistic

    def to_dict(self):
        return {
            "stat": self.kind.functional, "estimator": self.kind.estimator,
            "direction": self.kind.direction, "tau_low": self.interval.tau_low,
            "tau_high": self.interval.tau_high, "alpha": self.alpha, "trend": self.trend,
            "fbm_type": self.fbm_type, "bandwidth": self.bandwidth, "oracle_d": self.oracle_d,
        }

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        try:
            kind = StatKind(data.pop("stat", "I"), data.pop("estimator", "variance"),
                            data.pop("direction", "increase"))
            tau_low = float(data.pop("tau_low", 0.05))
            tau_high = data.pop("tau_high", None)
            interval = (TestingInterval.symmetric(tau_low) if tau_high is None
                        else TestingInterval(tau_low, float(tau_high)))
            return cls(kind=kind, interval=interval, **data)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid test specification: {exc}") from None


@dataclass(frozen=True)
class TestReport:
    statistic: float
    kind: StatKind
    label: str
    d_hat: float
    bandwidth: int | None
    quantile: float
    alpha: float
    reject: bool
    p_bracket: tuple
    warnings: tuple = ()
    degenerate: bool = False

    __test__ = False

    def to_dict(self):
        out = asdict(self)
        out["kind"] = asdict(self.kind)
        out["p_bracket"] = list(self.p_bracket)
        for name in ("statistic", "d_hat", "quantile"):
            if isinstance(out[name], float) and not math.isfinite(out[name]):
                out[name] = None
        return out

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)


def compute_statistic(x, spec):
    """The finite-sample statistic of ``spec`` (raw or de-trended)."""
    if spec.trend:
        return detrend.detrended_statistic(x, spec.interval, spec.kind)
    return core_stats.statistic(x, spec.interval, spec.kind)


def p_bracket(value, table, d_hat):
    """``(largest alpha not rejected, smallest alpha rejected)`` over the table grid."""
    keep, reject = None, None
    for a in table.alpha_grid:
        q = _quiet_lookup(table, a, d_hat).value
        if value > q:
            reject = float(a) if reject is None else min(reject, float(a))
        else:
            keep = float(a) if keep is None else max(keep, float(a))
    return keep, reject


def _quiet_lookup(table, alpha, d_hat):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return lookup(table, alpha, d_hat)


def run_test(x, spec=TestSpec(), tables=None):
    """Plug-in test of ``spec`` on series ``x``.

    A degenerate series (vanishing variance estimate on the grid) does not
    raise; the report carries ``degenerate=True`` and ``reject=False``.
    A missing table raises :class:`~memchange.errors.MissingTable`.
    """
    x = core_stats.as_series(x)
    tables = tables if tables is not None else TableStore()
    table = tables.get(spec.table_key)
    table.alpha_index(spec.alpha)
    try:
        value = compute_statistic(x, spec)
    except DegenerateDenominator as exc:
        return TestReport(math.nan, spec.kind, spec.label, math.nan, None, math.nan, spec.alpha,
                          False, (None, None), (f"degenerate series: {exc}",), True)
    if spec.oracle_d is not None:
        d_hat, bandwidth = float(spec.oracle_d), None
    else:
        est = (estimator.estimate_d_detrended if spec.trend else estimator.estimate_d)(
            x, spec.bandwidth
        )
        d_hat, bandwidth = est.d_hat, est.bandwidth
    found = _quiet_lookup(table, spec.alpha, d_hat)
    return TestReport(
        value, spec.kind, spec.label, d_hat, bandwidth, found.value, spec.alpha,
        bool(value > found.value), p_bracket(value, table, d_hat), found.warnings,
    )


# -- series I/O ----------------------------------------------------------------


def read_series(path_or_text):
    """Single-column CSV with optional ``value`` header; errors name the line."""
    text = path_or_text
    if isinstance(path_or_text, Path) or "\n" not in str(path_or_text):
        text = Path(path_or_text).read_text(encoding="utf-8")
    values = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        cell = line.strip()
        if not cell or (lineno == 1 and cell.lower() == "value"):
            continue
        try:
            values.append(float(cell))
        except ValueError:
            raise InvalidSeries(f"line {lineno}: cannot parse {cell!r} as a number") from None
    return core_stats.as_series(values, min_length=1)


def format_series(x):
    return "value\n" + "".join(f"{v!r}\n" for v in np.asarray(x, dtype=float).tolist())


def write_series(x, path):
    Path(path).write_text(format_series(x), encoding="utf-8", newline="\n")


# -- experiments -----------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    cells: tuple
    tests: tuple
    replications: int = 2000
    master_seed: int = 0
    output: str | None = None
    tables: str | None = None

    def __post_init__(self):
        if self.replications < 100:
            raise ConfigError("replications must be at least 100")
        if not self.cells or not self.tests:
            raise ConfigError("need at least one model cell and one test")

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        cells = [ModelSpec.from_dict(c) for c in data.pop("cells", [])]
        grid = data.pop("grid", None)
        if grid is not None:
            cells.extend(expand_grid(**grid))
        tests = [TestSpec.from_dict(t) for t in data.pop("tests", [])]
        try:
            return cls(tuple(cells), tuple(tests), **data)
        except TypeError as exc:
            raise ConfigError(f"invalid experiment configuration: {exc}") from None

    @classmethod
    def from_json(cls, text):
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from None


def expand_grid(family="abrupt", n=500, d1=(0.0,), d2=None, theta=0.5, ar_coeff=None, trend=None,
                upper_triangle=True):
    """Model cells over ``d1 x d2``; ``upper_triangle`` keeps ``d2 >= d1``.

    ``abrupt`` cells break at ``theta``; ``rapid``/``gradual`` cells use the
    linear path ``d1 + (d2 - d1) tau``.
    """
    d2 = d1 if d2 is None else d2
    cells = []
    for a, b in itertools.product(d1, d2):
        if upper_triangle and b < a:
            continue
        if family == "abrupt":
            mem = MemoryFunction.constant(a) if a == b else MemoryFunction.step(a, b, theta)
        elif family in ("rapid", "gradual"):
            mem = MemoryFunction.linear(a, b)
        else:
            raise ConfigError(f"grid expansion not supported for family {family!r}")
        cells.append(ModelSpec(n=n, family=family, memory=mem, ar_coeff=ar_coeff,
                               trend=None if trend is None else tuple(trend)))
    return cells


def cell_params(spec):
    m = spec.memory
    if m.kind == "constant":
        d1 = d2 = m.d
    elif m.kind == "step":
        d1, d2 = m.d1, m.d2
    else:
        d1, d2 = float(m(0.0)), float(m(1.0))
    a, b = spec.trend if spec.trend is not None else (0.0, 0.0)
    return {"family": spec.family, "n": spec.n, "d1": d1, "d2": d2,
            "ar_coeff": "" if spec.ar_coeff is None else spec.ar_coeff, "trend_a": a, "trend_b": b}


RESULT_COLUMNS = ("cell", "family", "n", "d1", "d2", "ar_coeff", "trend_a", "trend_b", "statistic",
                  "tau_low", "alpha", "rejection_rate_pct", "reps", "mc_se_pct", "degenerate", "error")


def lookup_many(table, alpha, d_hats):
    """Vectorised :func:`~memchange.quantiles.lookup` (clamping and gap snapping)."""
    col = table.values[:, table.alpha_index(alpha)]
    grid = table.d_grid
    d = np.clip(np.asarray(d_hats, dtype=float), grid[0], grid[-1])
    below, above = grid[grid < 0.5], grid[grid > 0.5]
    if below.size and above.size:
        lo, hi = below[-1], above[0]
        in_gap = (d > lo) & (d < hi)
        d = np.where(in_gap, np.where(d - lo < hi - d, lo, hi), d)
        low_side = d < 0.5
        return np.where(low_side, np.interp(d, below, col[grid < 0.5]),
                        np.interp(d, above, col[grid > 0.5]))
    return np.interp(d, grid, col)


def simulate_cell(spec, replications, master_seed, cell_id):
    rngs = [RngStream(master_seed, (cell_id, r)).generator() for r in range(replications)]
    return np.atleast_2d(spec.simulate(rngs))


def rejection_rates(x, tests, tables, d_cache=None):
    """Rejection counts of every test on the batch ``x`` (rows are replications)."""
    d_cache = {} if d_cache is None else d_cache
    out = []
    for test in tests:
        table = tables.get(test.table_key)
        if test.oracle_d is not None:
            d_hat = np.full(x.shape[0], float(test.oracle_d))
        else:
            key = (test.trend, test.bandwidth)
            if key not in d_cache:
                data = estimator.detrend_rows(x) if test.trend else x
                d_cache[key] = estimator.estimate_d_batch(data, test.bandwidth)[0]
            d_hat = d_cache[key]
        kind = (test.kind.functional, test.kind.direction)
        if test.trend:
            stat = detrend.detrended_statistic_batch(x, test.interval, [kind])[kind]
        else:
            stat = core_stats.statistic_batch(x, test.interval, [kind], test.kind.estimator)[kind]
        q = lookup_many(table, test.alpha, d_hat)
        valid = ~np.isnan(stat)
        out.append((int(np.sum(stat[valid] > q[valid])), int(valid.sum()), int((~valid).sum())))
    return out


def run_experiment(cfg, tables=None, progress=None):
    """Rejection rates (in %) for every (model cell, test) of ``cfg``.

    Replication ``r`` of cell ``c`` draws from substream ``(c, r)`` of the
    master seed.  A failing cell yields rows with an ``error`` message and
    does not stop the other cells.  Writes ``cfg.output`` when set.
    """
    tables = tables if tables is not None else TableStore(cfg.tables)
    rows = []
    for cell_id, spec in enumerate(cfg.cells):
        params = cell_params(spec)
        try:
            x = simulate_cell(spec, cfg.replications, cfg.master_seed, cell_id)
            results = rejection_rates(x, cfg.tests, tables)
            error = ""
        except Exception as exc:  # isolate failures per cell
            log.warning("cell %d failed: %s", cell_id, exc)
            results = [(0, 0, 0)] * len(cfg.tests)
            error = str(exc)
        for test, (hits, valid, degenerate) in zip(cfg.tests, results):
            rate = hits / valid if valid else math.nan
            se = math.sqrt(rate * (1 - rate) / valid) if valid else math.nan
            rows.append({
                "cell": cell_id, **params, "statistic": test.label,
                "tau_low": test.interval.tau_low, "alpha": test.alpha,
                "rejection_rate_pct": round(100 * rate, 4) if valid else "",
                "reps": valid, "mc_se_pct": round(100 * se, 4) if valid else "",
                "degenerate": degenerate, "error": error,
            })
        if progress is not None:
            progress(cell_id + 1, len(cfg.cells))
    if cfg.output:
        Path(cfg.output).write_text(format_results(rows), encoding="utf-8", newline="\n")
    return rows


def format_results(rows):
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=RESULT_COLUMNS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()
