"""Shared fixtures and independent reference implementations.

The oracles below are deliberately naive double loops written from the
defining sums; they share no code with the package.
"""

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def oracle_u(window):
    """Kim-type second moment of de-meaned partial sums of ``window``."""
    k = len(window)
    total = sum(window)
    acc = 0.0
    for j in range(1, k + 1):
        s_j = sum(window[:j])
        acc += (s_j - j / k * total) ** 2
    return acc / k**2


def oracle_v(window):
    k = len(window)
    total = sum(window)
    sq, lin = 0.0, 0.0
    for j in range(1, k + 1):
        d_j = sum(window[:j]) - j / k * total
        sq += d_j**2
        lin += d_j
    return sq / k**2 - (lin / k**1.5) ** 2


def oracle_detrended_v(window):
    """V of partial sums of OLS residuals of ``window`` on (1, j)."""
    k = len(window)
    js = list(range(1, k + 1))
    jbar = sum(js) / k
    xbar = sum(window) / k
    sxy = sum((j - jbar) * (x - xbar) for j, x in zip(js, window))
    sxx = sum((j - jbar) ** 2 for j in js)
    b = sxy / sxx
    a = xbar - b * jbar
    resid = [x - a - b * j for j, x in zip(js, window)]
    partial, sq, lin = 0.0, 0.0, 0.0
    for r in resid:
        partial += r
        sq += partial**2
        lin += partial
    return sq / k**2 - (lin / k**1.5) ** 2


def random_series(rng, n, kind):
    """Inputs that stress the O(n) prefix expansions."""
    t = np.arange(1, n + 1)
    if kind == "iid":
        return rng.standard_normal(n)
    if kind == "walk":
        return np.cumsum(rng.standard_normal(n))
    if kind == "i2_trend":
        return np.cumsum(np.cumsum(rng.standard_normal(n))) + 3 * t
    if kind == "offset":
        return 1e4 + rng.standard_normal(n)
    if kind == "slope":
        return 50 * t + rng.standard_normal(n)
    raise ValueError(kind)


SERIES_KINDS = ("iid", "walk", "i2_trend", "offset", "slope")


@pytest.fixture(scope="session")
def small_tables(tmp_path_factory):
    """A coarse table store (N=256, 1000 paths) for procedure and CLI tests."""
    from memchange.core_stats import TestingInterval
    from memchange.quantiles import build_tables, file_name, save_tables

    out = tmp_path_factory.mktemp("tables")
    d_grid = (-0.2, 0.0, 0.2, 0.4, 0.55, 0.8, 1.2)
    for functionals in (("Q", "Q_tilde", "Q_trend"),):
        iv = TestingInterval.symmetric(0.05)
        tables = build_tables(functionals, "typeI", (iv,), d_grid, N=256, path_count=1000,
                              master_seed=7)
        for fn in functionals:
            save_tables([t for t in tables if t.key.functional == fn], out / file_name(fn, "typeI", iv))
    return out


def pytest_terminal_summary(terminalreporter):
    """Print the acceptance criteria outcomes, one line each."""
    import sys

    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
