"""Periodogram and a local Whittle estimator of d valid for d in (-1/2, 3/2).

The estimator minimises the exact local Whittle objective

    R(d) = log(mean_j I_{Delta^d (x - mu(d))}(lambda_j)) - 2 d mean_j log(lambda_j)

over the first ``m`` Fourier frequencies, where ``Delta^d`` is the truncated
fractional difference.  The location estimate ``mu(d)`` blends the sample
mean (used for small d) with the first observation (used for large d), which
makes the estimate exactly location invariant.  All routines accept a batch of
series (rows) and share FFTs across the batch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.fft import irfft, next_fast_len, rfft

from .core_stats import as_series
from .detrend import residuals
from .errors import InvalidSeries

D_LOW, D_HIGH = -0.49, 1.49
COARSE_STEP = 0.01
TOLERANCE = 1e-4
METHOD = "exact_local_whittle_mean_adjusted"
_GOLDEN = (np.sqrt(5.0) - 1) / 2


@dataclass(frozen=True)
class Periodogram:
    frequencies: np.ndarray
    ordinates: np.ndarray
    n: int


@dataclass(frozen=True)
class DEstimate:
    d_hat: float
    bandwidth: int
    method: str
    objective: float


def periodogram(x):
    """``I(lambda_j) = |sum_t x_t e^{-i t lambda_j}|^2 / (2 pi n)`` for ``j = 1..n//2``."""
    x = as_series(x, min_length=16)
    n = x.size
    j = np.arange(1, n // 2 + 1)
    coef = np.fft.rfft(x)[1 : n // 2 + 1]
    return Periodogram(2 * np.pi * j / n, np.abs(coef) ** 2 / (2 * np.pi * n), n)


def default_bandwidth(n):
    return int(np.floor(np.sqrt(n)))


def _mean_weight(d):
    d = np.asarray(d, dtype=float)
    mid = 0.5 * (1 + np.cos(4 * np.pi * d))
    return np.where(d <= 0.5, 1.0, np.where(d >= 0.75, 0.0, mid))


def _diff_coeffs(d, n):
    """Rows of ``pi_0..pi_{n-1}(-d)`` for each entry of ``d``."""
    d = np.atleast_1d(np.asarray(d, dtype=float))
    j = np.arange(1, n, dtype=float)
    factors = (-d[:, None] - 1 + j[None, :]) / j[None, :]
    return np.concatenate([np.ones((d.size, 1)), np.cumprod(factors, axis=1)], axis=1)


class _Objective:
    """Batched local Whittle objective for fixed data ``x`` (rows) and ``m``."""

    def __init__(self, x, m):
        self.x = x
        self.n = x.shape[-1]
        self.m = m
        self.size = next_fast_len(2 * self.n, real=True)
        self.xf = rfft(x, self.size, axis=-1)
        self.mean = x.mean(axis=-1)
        self.first = x[:, 0]
        lam = 2 * np.pi * np.arange(1, m + 1) / self.n
        self.mean_log_lam = np.log(lam).mean()

    def __call__(self, d):
        """``R(d)`` per row; ``d`` is a scalar or one value per row."""
        d = np.broadcast_to(np.asarray(d, dtype=float), (self.x.shape[0],))
        scalar = np.all(d == d[0])
        coef = _diff_coeffs(d[:1] if scalar else d, self.n)
        cf = rfft(coef, self.size, axis=-1)
        diffed = irfft(self.xf * cf, self.size, axis=-1)[:, : self.n]
        # Delta^d applied to a constant is the running sum of the coefficients
        ones = np.cumsum(coef, axis=-1)
        w = _mean_weight(d)
        mu = w * self.mean + (1 - w) * self.first
        u = diffed - mu[:, None] * ones
        pg = np.abs(rfft(u, axis=-1)[:, 1 : self.m + 1]) ** 2
        with np.errstate(divide="ignore"):
            return np.log(pg.mean(axis=-1)) - 2 * d * self.mean_log_lam


def _check_bandwidth(n, m):
    if not 8 <= m <= n / 2:
        raise InvalidSeries(f"bandwidth m={m} must satisfy 8 <= m <= n/2 (n={n})")


def estimate_d_batch(x, m=None):
    """Estimates for each row of ``x``: returns ``(d_hat, objective)`` arrays.

    A coarse grid of step 0.01 over [-0.49, 1.49] locates the best bracket;
    golden-section search refines inside it to 1e-4.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n = x.shape[-1]
    m = default_bandwidth(n) if m is None else int(m)
    _check_bandwidth(n, m)
    flat = np.ptp(x, axis=-1) == 0
    if flat.any():
        raise InvalidSeries(f"series {int(np.flatnonzero(flat)[0])} is constant; d is not identified")
    obj = _Objective(x, m)
    grid = np.round(np.arange(D_LOW, D_HIGH + COARSE_STEP / 2, COARSE_STEP), 10)
    values = np.stack([obj(g) for g in grid], axis=1)
    if not np.all(np.isfinite(values)):
        bad = int(np.flatnonzero(~np.isfinite(values).all(axis=1))[0])
        raise InvalidSeries(f"local Whittle objective not finite for series {bad} (degenerate input)")
    best = values.argmin(axis=1)
    lo = grid[np.clip(best - 1, 0, grid.size - 1)]
    hi = grid[np.clip(best + 1, 0, grid.size - 1)]
    # golden-section search on [lo, hi]
    a, b = lo.copy(), hi.copy()
    c = b - _GOLDEN * (b - a)
    e = a + _GOLDEN * (b - a)
    fc, fe = obj(c), obj(e)
    while np.max(b - a) > TOLERANCE:
        left = fc < fe
        b = np.where(left, e, b)
        a = np.where(left, a, c)
        e_new = np.where(left, c, a + _GOLDEN * (b - a))
        c_new = np.where(left, b - _GOLDEN * (b - a), e)
        f_known = np.where(left, fc, fe)
        probe = np.where(left, c_new, e_new)
        f_probe = obj(probe)
        fc = np.where(left, f_probe, f_known)
        fe = np.where(left, f_known, f_probe)
        c, e = c_new, e_new
    mid = (a + b) / 2
    f_mid = obj(mid)
    coarse_best = values[np.arange(x.shape[0]), best]
    use_grid = coarse_best < f_mid
    d_hat = np.where(use_grid, grid[best], mid)
    return d_hat, np.where(use_grid, coarse_best, f_mid)


def estimate_d(x, m=None):
    x = as_series(x, min_length=16)
    m = default_bandwidth(x.size) if m is None else int(m)
    d_hat, value = estimate_d_batch(x, m)
    return DEstimate(float(d_hat[0]), m, METHOD, float(value[0]))


def detrend_rows(x):
    """Full-sample least-squares residuals of each row."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    t = np.arange(1, x.shape[-1] + 1, dtype=float)
    tc = t - t.mean()
    slope = (x - x.mean(axis=-1, keepdims=True)) @ tc / np.dot(tc, tc)
    return x - x.mean(axis=-1, keepdims=True) - slope[:, None] * tc


def estimate_d_detrended(x, m=None):
    """:func:`estimate_d` applied to least-squares residuals on ``(1, t)``."""
    x = as_series(x, min_length=16)
    resid = residuals(x)
    if np.ptp(resid) <= 1e-10 * np.ptp(x):
        raise InvalidSeries("series is an exact linear trend; d is not identified")
    est = estimate_d(resid, m)
    return DEstimate(est.d_hat, est.bandwidth, METHOD + "_detrended", est.objective)
