"""Data-generating processes: FARIMA, abrupt change in memory, type II
processes with initial values, rapidly and gradually changing memory,
heteroscedastic innovations and additive linear trends.

Every simulator accepts ``rng`` either as a single ``numpy.random.Generator``
(returns one series) or as a sequence of generators (returns one row per
generator).  Each row depends only on its own generator, so Monte Carlo
callers can give every replication its own substream and still transform all
replications in one vectorised pass.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np
from scipy.signal import fftconvolve, lfilter
from scipy.special import gammaln

from .errors import ConfigError

MA_TRUNCATION = 10_000
INITIAL_VALUE_TRUNCATION = 10_000
FAMILIES = ("farima", "abrupt", "rapid", "gradual", "typeII")


# -- randomness --------------------------------------------------------------


@dataclass(frozen=True)
class RngStream:
    """Independent substream ``stream_index`` of the master seed.

    ``stream_index`` may be an int or a tuple of ints (e.g. ``(cell, rep)``).
    """

    master_seed: int
    stream_index: int | tuple = 0

    def generator(self):
        index = self.stream_index
        key = tuple(index) if isinstance(index, (tuple, list)) else (index,)
        seq = np.random.SeedSequence(int(self.master_seed), spawn_key=tuple(int(i) for i in key))
        return np.random.default_rng(seq)


def generators(master_seed, prefix, count):
    """``count`` generators for streams ``(*prefix, 0) .. (*prefix, count-1)``."""
    prefix = tuple(prefix)
    return [RngStream(master_seed, prefix + (r,)).generator() for r in range(count)]


def _is_batch(rng):
    return isinstance(rng, (list, tuple))


def normals(rng, shape):
    """Standard normals of ``shape``; a leading batch axis for a list of generators."""
    if _is_batch(rng):
        return np.stack([g.standard_normal(shape) for g in rng])
    return rng.standard_normal(shape)


# -- memory functions and innovations -----------------------------------------


@dataclass(frozen=True)
class MemoryFunction:
    """A memory parameter ``d(tau)`` on ``(0, 1]``.

    ``kind`` is one of ``constant`` (uses ``d``), ``step`` (``d1`` up to and
    including ``theta``, ``d2`` after), ``piecewise_linear`` (``knots`` of
    ``(tau, d)`` pairs) or ``tabulated`` (``values`` on an equispaced grid of
    ``(0, 1]``, read from the left).
    """

    kind: str = "constant"
    d: float = 0.0
    d1: float = 0.0
    d2: float = 0.0
    theta: float = 0.5
    knots: tuple = ()
    values: tuple = ()

    def __post_init__(self):
        if self.kind not in ("constant", "step", "piecewise_linear", "tabulated"):
            raise ConfigError(f"unknown memory function kind {self.kind!r}")
        if self.kind == "step" and not 0.0 < self.theta < 1.0:
            raise ConfigError("step location must lie in (0, 1)")
        if self.kind == "piecewise_linear" and len(self.knots) < 2:
            raise ConfigError("piecewise-linear memory needs at least two knots")
        if self.kind == "tabulated" and len(self.values) < 1:
            raise ConfigError("tabulated memory needs values")

    @classmethod
    def constant(cls, d):
        return cls("constant", d=float(d))

    @classmethod
    def step(cls, d1, d2, theta):
        return cls("step", d1=float(d1), d2=float(d2), theta=float(theta))

    @classmethod
    def linear(cls, d1, d2):
        return cls("piecewise_linear", knots=((0.0, float(d1)), (1.0, float(d2))))

    def __call__(self, tau):
        tau = np.asarray(tau, dtype=float)
        if self.kind == "constant":
            return np.full(tau.shape, self.d)
        if self.kind == "step":
            return np.where(tau <= self.theta, self.d1, self.d2)
        if self.kind == "piecewise_linear":
            t, v = np.asarray(self.knots, dtype=float).T
            return np.interp(tau, t, v)
        vals = np.asarray(self.values, dtype=float)
        idx = np.clip(np.ceil(tau * vals.size - 1e-9).astype(int) - 1, 0, vals.size - 1)
        return vals[idx]

    def on_grid(self, n):
        """``d(t/n)`` for ``t = 1..n``."""
        return self(np.arange(1, n + 1) / n)


@dataclass(frozen=True)
class HeteroSigma:
    """Periodic volatility ``sigma(s)``: ``level + amplitude cos(2 pi s / period)``
    or, when ``values`` is given, ``values[s mod len(values)]``."""

    level: float = 1.0
    amplitude: float = 0.0
    period: float = 1.0
    values: tuple = ()

    def __call__(self, s):
        s = np.asarray(s)
        if self.values:
            vals = np.asarray(self.values, dtype=float)
            return vals[np.mod(s, vals.size)]
        return self.level + self.amplitude * np.cos(2 * np.pi * s / self.period)

    def mean_square(self):
        """Mean of sigma^2 over one period (the long-run variance factor)."""
        if self.values:
            return float(np.mean(np.square(self.values)))
        return self.level**2 + self.amplitude**2 / 2


@dataclass(frozen=True)
class InnovationSpec:
    law: str = "gaussian"
    df: float = 5.0
    sigma: HeteroSigma | None = None

    def __post_init__(self):
        if self.law not in ("gaussian", "student_t"):
            raise ConfigError(f"unknown innovation law {self.law!r}")
        if self.law == "student_t" and not self.df > 2:
            raise ConfigError("student-t innovations need df > 2 for unit variance")
        if self.sigma is not None and not self.sigma.mean_square() > 0:
            raise ConfigError("heteroscedastic sigma must have positive mean square")

    @property
    def is_plain_gaussian(self):
        return self.law == "gaussian" and self.sigma is None

    def _draw_one(self, gen, size):
        if self.law == "gaussian":
            return gen.standard_normal(size)
        return gen.standard_t(self.df, size) * np.sqrt((self.df - 2) / self.df)

    def draw(self, rng, times):
        """Innovations ``sigma_s zeta_s`` at integer times ``times``."""
        times = np.asarray(times)
        if _is_batch(rng):
            z = np.stack([self._draw_one(g, times.size) for g in rng])
        else:
            z = self._draw_one(rng, times.size)
        if self.sigma is not None:
            z = z * self.sigma(times)
        return z


GAUSSIAN = InnovationSpec()


# -- coefficients and stationary fractional noise -----------------------------


def _binomial_coeffs(d, J):
    j = np.arange(1, J + 1, dtype=float)
    return np.concatenate([[1.0], np.cumprod((d - 1 + j) / j)])


def farima_coeffs(d, J):
    """Coefficients ``pi_0..pi_J`` of ``(1 - z)^{-d}`` by the product recursion."""
    if not d > -1:
        raise ValueError("farima_coeffs needs d > -1")
    if J < 0:
        raise ValueError("J must be non-negative")
    return _binomial_coeffs(d, J)


def farima_autocovariance(d, max_lag):
    """Autocovariances ``gamma(0..max_lag)`` of FARIMA(0,d,0), unit innovations."""
    if not -0.5 < d < 0.5:
        raise ValueError("autocovariance defined for |d| < 0.5")
    g0 = np.exp(gammaln(1 - 2 * d) - 2 * gammaln(1 - d))
    h = np.arange(1, max_lag + 1, dtype=float)
    return np.concatenate([[g0], g0 * np.cumprod((h - 1 + d) / (h - d))])


def _check_memory(d):
    if not -0.5 < d < 1.5 or abs(d - 0.5) < 1e-12:
        raise ValueError(f"d={d} must lie in (-0.5, 1.5) and differ from 0.5")


@lru_cache(maxsize=32)
def _circulant_sqrt_eigs(d, n):
    size = 1 << max(int(np.ceil(np.log2(n))), 1)
    for _ in range(8):
        acov = farima_autocovariance(d, size)
        eig = np.fft.fft(np.concatenate([acov, acov[-2:0:-1]])).real
        if eig.min() >= -1e-10 * eig.max():
            return np.sqrt(np.clip(eig, 0.0, None) / (2 * size))
        size *= 2
    return None


def _circulant_noise(d, n, rng):
    lam = _circulant_sqrt_eigs(float(d), int(n))
    if lam is None:
        return None
    m = lam.size
    if _is_batch(rng):
        z = np.stack([g.standard_normal((2, m)) for g in rng])
    else:
        z = rng.standard_normal((2, m))
    w = lam * (z[..., 0, :] + 1j * z[..., 1, :])
    return np.fft.fft(w, axis=-1).real[..., :n]


def _ma_noise(ds, zeta, n):
    """Truncated moving averages of the shared innovations ``zeta``.

    ``zeta`` covers times ``1-L..n`` on its last axis (``L = len - n``); one
    output array per memory parameter in ``ds``.
    """
    L = zeta.shape[-1] - n
    out = []
    for d in ds:
        coef = farima_coeffs(d, L)
        kernel = coef.reshape((1,) * (zeta.ndim - 1) + (-1,))
        out.append(fftconvolve(zeta, kernel, mode="valid", axes=-1))
    return out


def _ar_filter(eps, phi, burn):
    y = lfilter([1.0], [1.0, -phi], eps, axis=-1)
    return y[..., burn:]


def _burn_in(ar_coeff):
    if ar_coeff is None:
        return 0
    if not -1 < ar_coeff < 1:
        raise ValueError("AR coefficient must lie in (-1, 1)")
    return int(np.ceil(10.0 / (1.0 - abs(ar_coeff))))


def _integrate_if_needed(ys, ds):
    return [np.cumsum(y, axis=-1) if d > 0.5 else y for y, d in zip(ys, ds)]


def simulate_farima(n, d, ar_coeff=None, innovations=GAUSSIAN, rng=None, method="auto"):
    """FARIMA(0,d,0) or FARIMA(1,d,0) of length ``n``.

    For ``|d| < 1/2`` the draw is stationary; for ``d`` in ``(1/2, 3/2)`` it is
    the cumulative sum of a stationary series with memory ``d - 1``.  Plain
    Gaussian innovations use exact circulant embedding (``method="auto"``);
    otherwise a moving average truncated at ``max(n, 10^4)`` lags is used.
    """
    _check_memory(d)
    rng = rng if rng is not None else np.random.default_rng()
    base = d - 1 if d > 0.5 else d
    burn = _burn_in(ar_coeff)
    total = n + burn
    eps = None
    if method == "auto" and innovations.is_plain_gaussian:
        eps = _circulant_noise(base, total, rng)
    elif method not in ("auto", "ma"):
        raise ValueError(f"unknown method {method!r}")
    if eps is None:
        L = max(total, MA_TRUNCATION)
        zeta = innovations.draw(rng, np.arange(1 - burn - L, n + 1))
        (eps,) = _ma_noise([base], zeta, total)
    y = _ar_filter(eps, ar_coeff, burn) if ar_coeff is not None else eps
    return np.cumsum(y, axis=-1) if d > 0.5 else y


def simulate_abrupt(n, d1, d2, theta_star, ar_coeff=None, innovations=GAUSSIAN, rng=None):
    """Memory ``d1`` up to ``floor(n theta*)`` and ``d2`` afterwards.

    Both regimes filter the same innovation sequence; with ``d1 == d2`` this
    delegates to :func:`simulate_farima`.
    """
    _check_memory(d1)
    _check_memory(d2)
    if not 0 < theta_star < 1:
        raise ValueError("theta_star must lie in (0, 1)")
    if d1 == d2:
        return simulate_farima(n, d1, ar_coeff, innovations, rng)
    rng = rng if rng is not None else np.random.default_rng()
    burn = _burn_in(ar_coeff)
    total = n + burn
    L = max(total, MA_TRUNCATION)
    ds = (d1, d2)
    bases = [d - 1 if d > 0.5 else d for d in ds]
    zeta = innovations.draw(rng, np.arange(1 - burn - L, n + 1))
    eps = _ma_noise(bases, zeta, total)
    if ar_coeff is not None:
        eps = [_ar_filter(e, ar_coeff, burn) for e in eps]
    first, second = _integrate_if_needed(eps, ds)
    k = int(np.floor(n * theta_star))
    return np.concatenate([first[..., :k], second[..., k:]], axis=-1)


def simulate_typeII(
    n, d, initial_values=None, innovations=GAUSSIAN, rng=None, truncation=INITIAL_VALUE_TRUNCATION
):
    """Type II process ``X_t = sum_{s<=t} pi_{t-s}(d) zeta_s`` plus initial-value term.

    ``initial_values`` lists ``X_0, X_{-1}, ...``; their contribution is the
    truncated binomial convolution ``(1-L)_+^{-d} (1-L)_-^{d} X^0``.
    """
    if not d > -0.5:
        raise ValueError("type II process needs d > -0.5")
    rng = rng if rng is not None else np.random.default_rng()
    zeta = innovations.draw(rng, np.arange(1, n + 1))
    pi = farima_coeffs(d, n - 1)
    x = fftconvolve(zeta, pi.reshape((1,) * (zeta.ndim - 1) + (-1,)), axes=-1)[..., :n]
    if initial_values is not None:
        x0 = np.asarray(initial_values, dtype=float)[:truncation]
        if x0.ndim != 1 or not np.all(np.isfinite(x0)):
            raise ValueError("initial values must be a finite one-dimensional array")
        if x0.size:
            x = x + _initial_value_term(n, d, x0)
    return x


def _initial_value_term(n, d, x0):
    T = x0.size
    c = _binomial_coeffs(-d, n + T - 1)  # (1-L)^d may have d > 1 here
    # w_t = sum_i pi_{t+i}(-d) X0_{-i},  t = 1..n
    w = fftconvolve(c, x0[::-1])[T : T + n]
    return fftconvolve(farima_coeffs(d, n - 1), w)[:n]


def _apply_rows(coef_by_lag, zeta):
    """``X_t = sum_{j<t} C[t, j] zeta_{t-j}`` with ``C`` indexed by lag."""
    n = coef_by_lag.shape[0]
    t = np.arange(n)[:, None]
    s = np.arange(n)[None, :]
    lag = t - s
    mat = np.where(lag >= 0, coef_by_lag[t, np.clip(lag, 0, None)], 0.0)
    return zeta @ mat.T


def _check_nonnegative(dvals):
    if np.any(dvals < 0):
        raise ValueError("changing-memory models need d(.) >= 0")


def rapid_coefficients(n, memory):
    """``C[t-1, j] = pi_j(d(t/n))`` for ``j < t``."""
    dv = memory.on_grid(n)
    _check_nonnegative(dv)
    j = np.arange(1, n, dtype=float)
    factors = (dv[:, None] - 1 + j[None, :]) / j[None, :]
    return np.concatenate([np.ones((n, 1)), np.cumprod(factors, axis=1)], axis=1)


def gradual_coefficients(n, memory):
    """``C[t-1, j] = prod_{i<=j} (d((t-i+1)/n) - 1 + i) / i`` for ``j < t``."""
    dv = memory.on_grid(n)
    _check_nonnegative(dv)
    t = np.arange(1, n + 1)[:, None]
    i = np.arange(1, n)[None, :]
    idx = np.clip(t - i, 0, None)  # d((t-i+1)/n) sits at position t-i (0-based)
    lagged = dv[idx]
    factors = np.where(i < t, (lagged - 1 + i) / i, 0.0)
    return np.concatenate([np.ones((n, 1)), np.cumprod(factors, axis=1)], axis=1)


def simulate_rapid(n, memory, innovations=GAUSSIAN, rng=None):
    rng = rng if rng is not None else np.random.default_rng()
    zeta = innovations.draw(rng, np.arange(1, n + 1))
    return _apply_rows(rapid_coefficients(n, memory), zeta)


def simulate_gradual(n, memory, innovations=GAUSSIAN, rng=None):
    rng = rng if rng is not None else np.random.default_rng()
    zeta = innovations.draw(rng, np.arange(1, n + 1))
    return _apply_rows(gradual_coefficients(n, memory), zeta)


def apply_trend(x, a=0.0, b=0.0):
    x = np.asarray(x, dtype=float)
    t = np.arange(1, x.shape[-1] + 1)
    return x + a + b * t


# -- model specification -----------------------------------------------------


@dataclass(frozen=True)
class ModelSpec:
    """Complete description of a simulated series (serialisable to JSON)."""

    n: int
    family: str = "farima"
    memory: MemoryFunction = field(default_factory=MemoryFunction)
    ar_coeff: float | None = None
    trend: tuple | None = None
    innovations: InnovationSpec = GAUSSIAN
    initial_values: tuple | None = None
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"family must be one of {FAMILIES}")
        if self.n < 1:
            raise ConfigError("n must be positive")
        if self.family == "abrupt" and self.memory.kind not in ("step", "constant"):
            raise ConfigError("abrupt family needs a step memory function")
        if self.family == "farima" and self.memory.kind != "constant":
            raise ConfigError("farima family needs a constant memory function")
        if self.family in ("farima", "abrupt"):
            for d in self._levels():
                try:
                    _check_memory(d)
                except ValueError as exc:
                    raise ConfigError(str(exc)) from None
        if self.initial_values is not None and self.family != "typeII":
            raise ConfigError("initial values only apply to the typeII family")

    def _levels(self):
        m = self.memory
        return (m.d,) if m.kind == "constant" else (m.d1, m.d2)

    def simulate(self, rng=None):
        """Draw the series; ``rng`` defaults to the stream of ``seed``."""
        rng = rng if rng is not None else RngStream(self.seed).generator()
        m, inn = self.memory, self.innovations
        if self.family == "farima":
            x = simulate_farima(self.n, m.d, self.ar_coeff, inn, rng)
        elif self.family == "abrupt":
            if m.kind == "constant":
                x = simulate_farima(self.n, m.d, self.ar_coeff, inn, rng)
            else:
                x = simulate_abrupt(self.n, m.d1, m.d2, m.theta, self.ar_coeff, inn, rng)
        elif self.family == "typeII":
            d = m.d if m.kind == "constant" else float(m(1.0))
            x = simulate_typeII(self.n, d, self.initial_values, inn, rng)
        elif self.family == "rapid":
            x = simulate_rapid(self.n, m, inn, rng)
        else:
            x = simulate_gradual(self.n, m, inn, rng)
        if self.trend is not None:
            x = apply_trend(x, *self.trend)
        return x

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        try:
            mem = data.get("memory", {})
            if isinstance(mem, dict):
                mem = dict(mem)
                mem["knots"] = tuple(tuple(k) for k in mem.get("knots", ()))
                mem["values"] = tuple(mem.get("values", ()))
                data["memory"] = MemoryFunction(**mem)
            inn = data.get("innovations", {})
            if isinstance(inn, dict):
                inn = dict(inn)
                sig = inn.get("sigma")
                if isinstance(sig, dict):
                    sig = dict(sig)
                    sig["values"] = tuple(sig.get("values", ()))
                    inn["sigma"] = HeteroSigma(**sig)
                data["innovations"] = InnovationSpec(**inn)
            if data.get("trend") is not None:
                data["trend"] = tuple(data["trend"])
            if data.get("initial_values") is not None:
                data["initial_values"] = tuple(data["initial_values"])
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(f"invalid model specification: {exc}") from None

    @classmethod
    def from_json(cls, text):
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from None
