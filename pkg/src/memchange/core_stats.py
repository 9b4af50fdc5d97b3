"""Partial sums, forward/backward variance estimators and ratio statistics.

All array routines operate along the last axis, so a 2-D array is treated as
a batch of independent series of equal length.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDenominator, InvalidInterval, InvalidSeries

FUNCTIONALS = ("W", "I", "R")
ESTIMATORS = ("variance", "kim")
DIRECTIONS = ("increase", "decrease", "two_sided_sum", "two_sided_max")

MIN_LENGTH = 8


def as_series(x, min_length=MIN_LENGTH):
    """Validate a single series and return it as a float64 array."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise InvalidSeries(f"series must be one-dimensional, got shape {arr.shape}")
    if arr.size < min_length:
        raise InvalidSeries(f"series needs at least {min_length} observations, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        bad = int(np.flatnonzero(~np.isfinite(arr))[0])
        raise InvalidSeries(f"non-finite value at position {bad + 1}")
    return arr


@dataclass(frozen=True)
class TestingInterval:
    """Fractions ``[tau_low, tau_high]`` of the sample where the ratio is evaluated."""

    tau_low: float
    tau_high: float

    __test__ = False  # not a pytest class

    def __post_init__(self):
        if not (0.0 < self.tau_low < self.tau_high < 1.0):
            raise InvalidInterval(
                f"need 0 < tau_low < tau_high < 1, got [{self.tau_low}, {self.tau_high}]"
            )

    @classmethod
    def symmetric(cls, tau_low):
        return cls(float(tau_low), round(1.0 - float(tau_low), 12))

    def k_range(self, n, min_window=2):
        """First and last k of the grid ``k = floor(n tau)``; validated for ``n``."""
        lo = int(np.floor(n * self.tau_low + 1e-9))
        hi = int(np.floor(n * self.tau_high + 1e-9))
        if lo < min_window or n - hi < min_window:
            raise InvalidInterval(
                f"interval [{self.tau_low}, {self.tau_high}] too wide for n={n}: "
                f"grid {lo}..{hi} must keep {min_window} points on each side"
            )
        return lo, hi

    def grid(self, n, min_window=2):
        lo, hi = self.k_range(n, min_window)
        return np.arange(lo, hi + 1)


@dataclass(frozen=True)
class StatKind:
    functional: str = "I"
    estimator: str = "variance"
    direction: str = "increase"

    def __post_init__(self):
        if self.functional not in FUNCTIONALS:
            raise ValueError(f"functional must be one of {FUNCTIONALS}")
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"estimator must be one of {ESTIMATORS}")
        if self.direction not in DIRECTIONS:
            raise ValueError(f"direction must be one of {DIRECTIONS}")


@dataclass(frozen=True)
class RatioPath:
    k_grid: np.ndarray
    numer: np.ndarray
    denom: np.ndarray
    ratio: np.ndarray


def forward_partial_sums(x):
    return np.cumsum(as_series(x, min_length=1))


def backward_partial_sums(x):
    """``out[m-1] = S*_m``, the sum of the last ``m`` observations."""
    return np.cumsum(as_series(x, min_length=1)[::-1])


def _check_k(n, k, lo, hi):
    if not (lo <= k <= hi):
        raise IndexError(f"k={k} outside [{lo}, {hi}] for n={n}")


def _anchors(x, factor=2):
    """Yield ``x`` shifted by the means of its first 1, 2, 4, ... points."""
    n = x.shape[-1]
    length = 1
    while True:
        length = min(length, n)
        yield x - x[..., :length].mean(axis=-1, keepdims=True)
        if length == n:
            return
        length *= factor


def _deviation_sweep(x):
    """Sums of D_j = S_j - (j/k) S_k and D_j^2 over j <= k, for every k.

    Prefix aggregates of S_j, j S_j and S_j^2 make the sweep O(n).  Also
    returns the raw energy sum S_j^2, which measures cancellation.
    """
    n = x.shape[-1]
    j = np.arange(1, n + 1, dtype=float)
    s = np.cumsum(x, axis=-1)
    a1 = np.cumsum(s, axis=-1)
    a2 = np.cumsum(s * s, axis=-1)
    b1 = np.cumsum(j * s, axis=-1)
    j1 = j * (j + 1) / 2
    j2 = j * (j + 1) * (2 * j + 1) / 6
    r = s / j
    sum_d = a1 - r * j1
    sum_d2 = a2 - 2 * r * b1 + r * r * j2
    return sum_d, sum_d2, a2


def forward_estimates(x, estimator="variance", anchor_factor=2):
    """V_k (or Kim's U_k) for k = 1..n; entry ``k-1`` holds the value for ``k``.

    The statistics are location invariant, so the sweep is repeated with a few
    dyadic location anchors and each k keeps the best-conditioned result.
    A larger ``anchor_factor`` spaces the anchors further apart: fewer sweeps,
    slightly less precision.
    """
    if estimator not in ESTIMATORS:
        raise ValueError(f"unknown estimator {estimator!r}")
    x = np.asarray(x, dtype=float)
    k = np.arange(1, x.shape[-1] + 1, dtype=float)
    best = best_energy = None
    for anchored in _anchors(x, anchor_factor):
        sum_d, sum_d2, energy = _deviation_sweep(anchored)
        est = sum_d2 / k**2
        if estimator == "variance":
            est = est - sum_d**2 / k**3
        if best is None:
            best, best_energy = est, energy
        else:
            better = energy < best_energy
            best = np.where(better, est, best)
            best_energy = np.where(better, energy, best_energy)
    return np.clip(best, 0.0, None)


def backward_estimates(x, estimator="variance", anchor_factor=2):
    """V*_m (or U*_m) for m = 1..n, computed on the reversed series."""
    return forward_estimates(np.asarray(x, dtype=float)[..., ::-1], estimator, anchor_factor)


def u_second_moment(x, k):
    x = as_series(x, min_length=1)
    _check_k(x.size, k, 1, x.size)
    s = np.cumsum(x[:k])
    j = np.arange(1, k + 1)
    return float(np.sum((s - j / k * s[-1]) ** 2) / k**2)


def u_second_moment_star(x, k):
    """U*_{n-k}: Kim's second moment over the back window ``k+1..n``."""
    x = as_series(x, min_length=1)
    _check_k(x.size, k, 0, x.size - 1)
    return u_second_moment(x[k:][::-1], x.size - k)


def v_variance(x, k):
    x = as_series(x, min_length=1)
    _check_k(x.size, k, 1, x.size)
    s = np.cumsum(x[:k])
    j = np.arange(1, k + 1)
    dev = s - j / k * s[-1]
    return float(np.sum(dev**2) / k**2 - (np.sum(dev) / k**1.5) ** 2)


def v_variance_star(x, k):
    x = as_series(x, min_length=1)
    _check_k(x.size, k, 0, x.size - 1)
    return v_variance(x[k:][::-1], x.size - k)


def _constant_prefix_length(x):
    """Length of the longest prefix on which every series in ``x`` is constant."""
    x = np.asarray(x, dtype=float)
    changed = x != x[..., :1]
    any_change = changed.any(axis=-1)
    first = np.where(any_change, changed.argmax(axis=-1), x.shape[-1])
    return first


def ratio_components(x, interval, estimator="variance"):
    """Backward (numerator) and forward (denominator) estimates on the k-grid.

    Returns ``(k_grid, numer, denom)`` with ``numer``/``denom`` shaped like
    ``x[..., :len(k_grid)]``.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    ks = interval.grid(n)
    fwd = forward_estimates(x, estimator)
    bwd = backward_estimates(x, estimator)
    return ks, bwd[..., n - ks - 1], fwd[..., ks - 1]


def _raise_if_degenerate(x, ks, numer, denom, direction):
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    checks = []
    if direction != "decrease":
        checks.append((_constant_prefix_length(x), denom, ks))
    if direction != "increase":
        checks.append((_constant_prefix_length(x[..., ::-1]), numer, n - ks))
    for const_len, est, window in checks:
        bad = (window[None, :] <= np.atleast_1d(const_len)[:, None]) | (
            np.atleast_2d(est) <= 0.0
        )
        if bad.any():
            idx = np.argwhere(bad)[0]
            raise DegenerateDenominator(ks[idx[1]])


def reduce_ratio(numer, denom, functional, direction, n):
    """Collapse numerator/denominator arrays on the grid into a statistic.

    ``n`` is the sample (or path grid) size used as the Riemann weight ``1/n``
    of the integral statistic.
    """
    if direction in ("two_sided_sum", "two_sided_max"):
        up = reduce_ratio(numer, denom, functional, "increase", n)
        down = reduce_ratio(numer, denom, functional, "decrease", n)
        return up + down if direction == "two_sided_sum" else np.maximum(up, down)
    if direction == "decrease":
        numer, denom = denom, numer
    elif direction != "increase":
        raise ValueError(f"unknown direction {direction!r}")
    if functional == "W":
        return np.max(numer / denom, axis=-1)
    if functional == "I":
        return np.sum(numer / denom, axis=-1) / n
    if functional == "R":
        return np.min(numer, axis=-1) / np.min(denom, axis=-1)
    raise ValueError(f"unknown functional {functional!r}")


def ratio_path(x, interval, estimator="variance"):
    x = as_series(x)
    ks, numer, denom = ratio_components(x, interval, estimator)
    _raise_if_degenerate(x, ks, numer, denom, "increase")
    return RatioPath(ks, numer, denom, numer / denom)


def statistic(x, interval, kind=StatKind()):
    """Value of the ratio statistic described by ``kind`` for series ``x``."""
    x = as_series(x)
    ks, numer, denom = ratio_components(x, interval, kind.estimator)
    _raise_if_degenerate(x, ks, numer, denom, kind.direction)
    return float(reduce_ratio(numer, denom, kind.functional, kind.direction, x.size))


def statistic_batch(x, interval, kinds, estimator="variance"):
    """Evaluate several (functional, direction) pairs on a batch of series.

    ``x`` has shape ``(reps, n)``. Returns a dict keyed by ``(functional,
    direction)`` of arrays of length ``reps``; series whose denominator
    vanishes on the grid get ``nan``.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n = x.shape[-1]
    ks, numer, denom = ratio_components(x, interval, estimator)
    bad_fwd = ks[None, :] <= _constant_prefix_length(x)[:, None]
    bad_bwd = (n - ks)[None, :] <= _constant_prefix_length(x[:, ::-1])[:, None]
    bad = (bad_fwd | bad_bwd | (numer <= 0) | (denom <= 0)).any(axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = {
            (f, d): np.where(bad, np.nan, reduce_ratio(numer, denom, f, d, n))
            for f, d in kinds
        }
    return out
