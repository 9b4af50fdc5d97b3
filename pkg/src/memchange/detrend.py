"""Trend-robust variance ratios.

Each forward window ``1..k`` and backward window ``k+1..n`` is de-trended by
its own least-squares line before partial sums are formed.  The fast path
re-fits every window in O(1) from prefix moments.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core_stats import StatKind, as_series, reduce_ratio
from .errors import DegenerateDenominator, WindowTooShort

MIN_WINDOW = 3


@dataclass(frozen=True)
class RegressionFit:
    intercept: float
    slope: float
    window: range


def fit_trend(x, window=None):
    """Least-squares fit of ``x_j = a + b j`` over 1-based positions ``window``."""
    x = as_series(x, min_length=1)
    if window is None:
        window = range(1, x.size + 1)
    if len(window) < MIN_WINDOW:
        raise WindowTooShort(f"trend window needs {MIN_WINDOW} points, got {len(window)}")
    j = np.asarray(window, dtype=float)
    y = x[np.asarray(window) - 1]
    jc = j - j.mean()
    slope = float(np.dot(jc, y - y.mean()) / np.dot(jc, jc))
    intercept = float(y.mean() - slope * j.mean())
    return RegressionFit(intercept, slope, window)


def residuals(x, window=None):
    x = as_series(x, min_length=1)
    fit = fit_trend(x, window)
    j = np.asarray(fit.window)
    return x[j - 1] - fit.intercept - fit.slope * j


def residual_partial_sums(x, k):
    """Ŝ_1..Ŝ_k from the fit over the front window ``1..k``."""
    x = as_series(x, min_length=1)
    if not MIN_WINDOW <= k <= x.size:
        raise WindowTooShort(f"front window k={k} invalid for n={x.size}")
    return np.cumsum(residuals(x, range(1, k + 1)))


def residual_partial_sums_star(x, k):
    """Backward residual sums over the window ``k+1..n``.

    Entry ``m-1`` is the sum of the last ``m`` residuals, i.e. Ŝ*_{n-j+1}
    with ``j = n-m+1``.
    """
    x = as_series(x, min_length=1)
    if not 0 <= k <= x.size - MIN_WINDOW:
        raise WindowTooShort(f"back window n-k={x.size - k} invalid for n={x.size}")
    return np.cumsum(residuals(x, range(k + 1, x.size + 1))[::-1])


def _variance_form(s):
    k = s.size
    return float(np.sum(s**2) / k**2 - (np.sum(s) / k**1.5) ** 2)


def v_detrended(x, k):
    return _variance_form(residual_partial_sums(x, k))


def v_detrended_star(x, k):
    return _variance_form(residual_partial_sums_star(x, k))


def _anchor_lines(x, factor=2):
    """Yield ``x`` minus least-squares lines fitted to its first 2, 4, 8, ... points.

    Every window statistic is invariant to subtracting a line, but the prefix
    expansion loses precision when the subtracted line is far from the local
    trend; trying dyadic anchors lets each k pick a well-conditioned one.
    """
    n = x.shape[-1]
    j = np.arange(1, n + 1, dtype=float)
    length = 2
    while True:
        length = min(length, n)
        jw = j[:length]
        jc = jw - jw.mean()
        xw = x[..., :length]
        xm = xw.mean(axis=-1, keepdims=True)
        slope = ((xw - xm) @ jc / np.dot(jc, jc))[..., None]
        yield x - xm - slope * (j - jw.mean())
        if length == n:
            return
        length *= factor


def _detrended_sweep(x):
    n = x.shape[-1]
    j = np.arange(1, n + 1, dtype=float)
    tri = j * (j + 1) / 2
    s = np.cumsum(x, axis=-1)
    sjx = np.cumsum(j * x, axis=-1)
    j1 = tri
    j2 = j * (j + 1) * (2 * j + 1) / 6
    t1 = np.cumsum(tri)
    t2 = np.cumsum(tri * tri)
    p = np.cumsum(j * tri)
    den = j * j2 - j1 * j1
    safe = np.where(den > 0, den, 1.0)
    b = np.where(den > 0, (j * sjx - j1 * s) / safe, 0.0)
    a = (s - b * j1) / j
    a1 = np.cumsum(s, axis=-1)
    a2 = np.cumsum(s * s, axis=-1)
    b1 = np.cumsum(j * s, axis=-1)
    c1 = np.cumsum(tri * s, axis=-1)
    sum_hat = a1 - a * j1 - b * t1
    sum_hat2 = a2 + a * a * j2 + b * b * t2 - 2 * a * b1 - 2 * b * c1 + 2 * a * b * p
    return sum_hat2 / j**2 - sum_hat**2 / j**3, a2


def forward_detrended_estimates(x, anchor_factor=2):
    """𝒱_k for k = 1..n (entries below ``MIN_WINDOW`` are meaningless zeros)."""
    x = np.asarray(x, dtype=float)
    best_v = best_energy = None
    for anchored in _anchor_lines(x, anchor_factor):
        v, energy = _detrended_sweep(anchored)
        if best_v is None:
            best_v, best_energy = v, energy
        else:
            better = energy < best_energy
            best_v = np.where(better, v, best_v)
            best_energy = np.where(better, energy, best_energy)
    best_v[..., : MIN_WINDOW - 1] = 0.0
    return np.clip(best_v, 0.0, None)


def backward_detrended_estimates(x, anchor_factor=2):
    return forward_detrended_estimates(np.asarray(x, dtype=float)[..., ::-1], anchor_factor)


def _linear_prefix_length(x):
    """Length of the longest prefix on which each series is exactly linear."""
    x = np.asarray(x, dtype=float)
    scale = np.max(np.abs(x), axis=-1, keepdims=True)
    curved = np.abs(np.diff(x, n=2, axis=-1)) > 1e-10 * np.maximum(scale, 1e-300)
    any_curved = curved.any(axis=-1)
    return np.where(any_curved, curved.argmax(axis=-1) + 2, x.shape[-1])


def detrended_components(x, interval):
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    ks = interval.grid(n, min_window=MIN_WINDOW)
    fwd = forward_detrended_estimates(x)
    bwd = backward_detrended_estimates(x)
    return ks, bwd[..., n - ks - 1], fwd[..., ks - 1]


def _degenerate_mask(x, ks, numer, denom):
    x = np.atleast_2d(x)
    n = x.shape[-1]
    bad_fwd = ks[None, :] <= _linear_prefix_length(x)[:, None]
    bad_bwd = (n - ks)[None, :] <= _linear_prefix_length(x[:, ::-1])[:, None]
    return bad_fwd, bad_bwd | (np.atleast_2d(numer) <= 0), np.atleast_2d(denom) <= 0


def detrended_statistic(x, interval, kind=StatKind()):
    """Ratio statistic built from 𝒱 estimates; ``kind.estimator`` is ignored."""
    x = as_series(x)
    ks, numer, denom = detrended_components(x, interval)
    bad_fwd, bad_bwd, bad_den = _degenerate_mask(x, ks, numer, denom)
    masks = []
    if kind.direction != "decrease":
        masks.append(bad_fwd | bad_den)
    if kind.direction != "increase":
        masks.append(bad_bwd)
    for m in masks:
        if m.any():
            raise DegenerateDenominator(ks[np.argwhere(m)[0][1]])
    return float(reduce_ratio(numer, denom, kind.functional, kind.direction, x.size))


def detrended_statistic_batch(x, interval, kinds):
    """Batch counterpart of :func:`detrended_statistic`; degenerate rows are nan."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    ks, numer, denom = detrended_components(x, interval)
    bad_fwd, bad_bwd, bad_den = _degenerate_mask(x, ks, numer, denom)
    bad = (bad_fwd | bad_bwd | bad_den).any(axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        return {
            (f, d): np.where(bad, np.nan, reduce_ratio(numer, denom, f, d, x.shape[-1]))
            for f, d in kinds
        }
