"""Type I / type II fractional Brownian motion on a grid and limit functionals.

Paths are stored on the grid ``u_j = j/N``, ``j = 0..N`` with ``Z(0) = 0``.
Integrals over ``[0, tau]`` are right-endpoint Riemann sums over
``u_1..u_k``, ``tau = k/N``.  With that convention the variance functional of
a path equals ``N`` times the discrete variance estimator of its increments,
which is what the vectorised profiles exploit.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.fft import irfft, next_fast_len, rfft

from . import core_stats, detrend
from .core_stats import StatKind, TestingInterval
from .errors import DegenerateDenominator
from .models import farima_coeffs, normals

FBM_TYPES = ("typeI", "typeII")
LIMIT_FUNCTIONALS = ("Q", "Q_tilde", "Q_trend")
MIN_GRID = 256
DEFAULT_GRID = 2048
# coarser location anchors: ~1e-11 relative agreement with the full ladder
PROFILE_ANCHOR_FACTOR = 16


@dataclass(frozen=True)
class LimitPath:
    values: np.ndarray
    fbm_type: str
    d: float

    @property
    def grid_size(self):
        return self.values.shape[-1] - 1


@dataclass(frozen=True)
class LimitStatSample:
    kind: StatKind
    functional: str
    value: float
    d: float
    fbm_type: str
    interval: TestingInterval


def _check_d(d, upper=1.5):
    if not -0.5 < d < upper or abs(d - 0.5) < 1e-12:
        raise ValueError(f"d={d} outside (-0.5, {upper}) or equal to 0.5")


@lru_cache(maxsize=64)
def _fgn_sqrt_eigs(hurst, n):
    k = np.arange(n + 1, dtype=float)
    h2 = 2.0 * hurst
    acov = 0.5 * ((k + 1) ** h2 - 2 * k**h2 + np.abs(k - 1) ** h2)
    circ = np.concatenate([acov, acov[-2:0:-1]])
    eig = np.fft.fft(circ).real
    if eig.min() < -1e-10 * eig.max():
        raise RuntimeError(f"circulant embedding failed for H={hurst}")
    return np.sqrt(np.clip(eig, 0.0, None) / (2 * n))


def fgn(hurst, n, rng):
    """Unit-variance fractional Gaussian noise by circulant embedding.

    ``rng`` is a Generator (returns shape ``(n,)``) or a list of them (one row
    per generator).
    """
    lam = _fgn_sqrt_eigs(float(hurst), int(n))
    z = normals(rng, (2, 2 * n))
    w = lam * (z[..., 0, :] + 1j * z[..., 1, :])
    return np.fft.fft(w, axis=-1).real[..., :n]


def _fbm_grid(hurst, n, rng):
    inc = fgn(hurst, n, rng)
    path = np.cumsum(inc, axis=-1) * float(n) ** (-hurst)
    return np.concatenate([np.zeros(path.shape[:-1] + (1,)), path], axis=-1)


def simulate_fbm_typeI(d, N=DEFAULT_GRID, rng=None):
    """Type I fBm with memory ``d`` (Hurst ``d + 1/2``) on ``N + 1`` grid points.

    For ``d > 1/2`` the path is the running trapezoidal integral of a type I
    fBm with memory ``d - 1``.  Scale is arbitrary: ratio statistics ignore it.
    """
    _check_d(d)
    if N < MIN_GRID:
        raise ValueError(f"grid size must be at least {MIN_GRID}")
    rng = rng if rng is not None else np.random.default_rng()
    if d < 0.5:
        values = _fbm_grid(d + 0.5, N, rng)
    else:
        inner = _fbm_grid(d - 0.5, N, rng)
        steps = (inner[..., 1:] + inner[..., :-1]) / (2.0 * N)
        values = np.concatenate(
            [np.zeros(steps.shape[:-1] + (1,)), np.cumsum(steps, axis=-1)], axis=-1
        )
    return LimitPath(values, "typeI", float(d))


def simulate_fbm_typeII(d, N=DEFAULT_GRID, rng=None):
    """Type II fBm via normalised partial sums of the truncated FARIMA filter."""
    if not d > -0.5:
        raise ValueError("type II fBm needs d > -0.5")
    if N < MIN_GRID:
        raise ValueError(f"grid size must be at least {MIN_GRID}")
    rng = rng if rng is not None else np.random.default_rng()
    zeta = normals(rng, (N,))
    # partial sums of the pi(d) filter are the pi(d + 1) filter
    size = next_fast_len(2 * N, real=True)
    coef = rfft(farima_coeffs(d + 1.0, N - 1), size)
    sums = irfft(rfft(zeta, size, axis=-1) * coef, size, axis=-1)[..., :N]
    sums *= float(N) ** (-d - 0.5)
    values = np.concatenate([np.zeros(sums.shape[:-1] + (1,)), sums], axis=-1)
    return LimitPath(values, "typeII", float(d))


def simulate_paths(fbm_type, d, N, rng):
    if fbm_type == "typeI":
        return simulate_fbm_typeI(d, N, rng)
    if fbm_type == "typeII":
        return simulate_fbm_typeII(d, N, rng)
    raise ValueError(f"unknown fbm type {fbm_type!r}")


# -- point functionals: direct Riemann sums ---------------------------------


def _grid_index(path, tau):
    N = path.grid_size
    k = int(round(tau * N))
    if abs(k - tau * N) > 1e-9 * N or not 0 < k <= N:
        raise ValueError(f"tau={tau} is not a positive grid point of N={N}")
    return k, N


def _bridge(path, tau):
    k, N = _grid_index(path, tau)
    z = np.asarray(path.values, dtype=float)
    u = np.arange(1, k + 1) / N
    return z[1 : k + 1] - u / (k / N) * z[k], k, N


def _variance_functional(dev, tau, N, mean_term=True):
    second = np.sum(dev**2) / N
    if not mean_term:
        return second / tau**2
    first = np.sum(dev) / N
    return (second - first**2 / tau) / tau**2


def q_functional(path, tau):
    dev, k, N = _bridge(path, tau)
    return float(_variance_functional(dev, k / N, N))


def q_tilde_functional(path, tau):
    dev, k, N = _bridge(path, tau)
    return float(_variance_functional(dev, k / N, N, mean_term=False))


def reversed_path(path):
    """Z*(u) = Z(1) - Z(1 - u) on the same grid."""
    z = np.asarray(path.values, dtype=float)
    return LimitPath(z[-1] - z[::-1], path.fbm_type, path.d)


def q_star(path, tau):
    """Q_{1-tau}(Z*), the backward counterpart of :func:`q_functional`."""
    _grid_index(path, tau)
    return q_functional(reversed_path(path), round(1.0 - tau, 15))


def detrended_bridge(path, tau):
    """The residual process 𝒵(u, tau) at ``u = 0, 1/N, ..., tau``.

    The coefficients solve the discretised normal equations
    ``Z(tau) = a tau + b tau^2/2`` and ``∫Z = a ∫u + (b/2) ∫u^2`` (Riemann
    sums), so linear and quadratic paths are annihilated exactly.
    """
    k, N = _grid_index(path, tau)
    tau = k / N
    z = np.asarray(path.values, dtype=float)[1 : k + 1]
    u = np.arange(1, k + 1) / N
    lhs = np.array([[tau, tau**2 / 2], [u.sum() / N, (u**2).sum() / (2 * N)]])
    rhs = np.array([z[-1], z.sum() / N])
    a, b = np.linalg.solve(lhs, rhs)
    resid = z - a * u - b / 2 * u**2
    return np.concatenate([[0.0], resid])


def q_detrended_functional(path, tau):
    k, N = _grid_index(path, tau)
    resid = detrended_bridge(path, tau)[1:]
    return float(_variance_functional(resid, k / N, N))


# -- vectorised profiles -----------------------------------------------------


def functional_profiles(values, functional="Q"):
    """Forward and backward functionals at every grid point, for a batch.

    Returns ``(fwd, bwd)`` where ``fwd[..., k-1]`` is the functional at
    ``tau = k/N`` and ``bwd[..., m-1]`` the reversed-path functional at
    ``m/N`` (so ``Q_{1-tau}(Z*)`` sits at ``m = N - k``).
    """
    values = np.asarray(values, dtype=float)
    N = values.shape[-1] - 1
    inc = np.diff(values, axis=-1)
    if functional == "Q":
        fwd = core_stats.forward_estimates(inc, "variance", PROFILE_ANCHOR_FACTOR)
        bwd = core_stats.backward_estimates(inc, "variance", PROFILE_ANCHOR_FACTOR)
    elif functional == "Q_tilde":
        fwd = core_stats.forward_estimates(inc, "kim", PROFILE_ANCHOR_FACTOR)
        bwd = core_stats.backward_estimates(inc, "kim", PROFILE_ANCHOR_FACTOR)
    elif functional == "Q_trend":
        fwd = detrend.forward_detrended_estimates(inc, PROFILE_ANCHOR_FACTOR)
        bwd = detrend.backward_detrended_estimates(inc, PROFILE_ANCHOR_FACTOR)
    else:
        raise ValueError(f"unknown functional {functional!r}")
    return N * fwd, N * bwd


def limit_components(values, interval, functional="Q"):
    values = np.asarray(values, dtype=float)
    N = values.shape[-1] - 1
    min_window = detrend.MIN_WINDOW if functional == "Q_trend" else 2
    ks = interval.grid(N, min_window=min_window)
    fwd, bwd = functional_profiles(values, functional)
    return ks, bwd[..., N - ks - 1], fwd[..., ks - 1]


def statistics_from_profiles(fwd, bwd, interval, kinds, functional="Q"):
    """Statistics on ``interval`` from precomputed :func:`functional_profiles`.

    Profiles do not depend on the interval, so one profile pass can serve
    several testing intervals.  Paths with a vanishing estimate get ``nan``.
    """
    N = fwd.shape[-1]
    min_window = detrend.MIN_WINDOW if functional == "Q_trend" else 2
    ks = interval.grid(N, min_window=min_window)
    numer, denom = bwd[..., N - ks - 1], fwd[..., ks - 1]
    bad = ((numer <= 0) | (denom <= 0)).any(axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        return {
            (f, d): np.where(bad, np.nan, core_stats.reduce_ratio(numer, denom, f, d, N))
            for f, d in kinds
        }


def limit_statistic_batch(values, interval, kinds, functional="Q"):
    """All requested ``(functional, direction)`` statistics for a batch of paths."""
    fwd, bwd = functional_profiles(np.atleast_2d(values), functional)
    return statistics_from_profiles(fwd, bwd, interval, kinds, functional)


def limit_statistic(path, interval, kind=StatKind(), functional="Q"):
    """Limit statistic of a single path: sup, Riemann integral or inf-ratio."""
    ks, numer, denom = limit_components(path.values, interval, functional)
    bad = (numer <= 0) | (denom <= 0)
    if bad.any():
        raise DegenerateDenominator(ks[np.flatnonzero(bad)[0]])
    value = core_stats.reduce_ratio(numer, denom, kind.functional, kind.direction, path.grid_size)
    return LimitStatSample(kind, functional, float(value), path.d, path.fbm_type, interval)
