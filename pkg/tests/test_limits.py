import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import gamma

from memchange import limits as lim
from memchange.core_stats import DIRECTIONS, FUNCTIONALS, StatKind, TestingInterval
from memchange.models import RngStream

N = 2048
U = np.arange(N + 1) / N


def path(values, d=0.0):
    return lim.LimitPath(np.asarray(values, dtype=float), "typeI", d)


def gens(count, offset=0):
    return [RngStream(5, (offset, r)).generator() for r in range(count)]


def brownian(seed, n=N):
    inc = np.random.default_rng(seed).standard_normal(n) / np.sqrt(n)
    return path(np.r_[0.0, np.cumsum(inc)])


class TestSimulation:
    def test_brownian_variance(self):
        z = lim.simulate_fbm_typeI(0.0, 256, gens(10000)).values
        se = np.sqrt(2 / 9999)
        assert abs(z[:, -1].var(ddof=1) - 1) < 3 * se

    @pytest.mark.parametrize("d", [-0.3, 0.2, 0.4])
    def test_self_similarity(self, d):
        z = lim.simulate_fbm_typeI(d, 256, gens(10000, offset=int(10 * d) + 10)).values
        ratio = z[:, 128].var() / z[:, -1].var()
        # ratio of two correlated variances: generous MC band
        assert ratio == pytest.approx(0.5 ** (2 * d + 1), rel=0.06)

    @pytest.mark.parametrize("d", [0.3, 0.9])
    def test_starts_at_zero(self, d):
        z = lim.simulate_fbm_typeI(d, 256, np.random.default_rng(0))
        assert z.values[0] == 0.0 and z.grid_size == 256

    def test_integrated_type_is_smooth(self):
        z = lim.simulate_fbm_typeI(1.2, 256, np.random.default_rng(1)).values
        inner = np.diff(z) * 256  # should be a continuous path
        assert np.max(np.abs(np.diff(inner))) < 0.5 * np.ptp(inner)

    @pytest.mark.parametrize("d", [0.5, -0.5, 1.5])
    def test_rejected(self, d):
        with pytest.raises(ValueError):
            lim.simulate_fbm_typeI(d, 256, np.random.default_rng(0))

    def test_grid_too_small(self):
        with pytest.raises(ValueError):
            lim.simulate_fbm_typeI(0.1, 128, np.random.default_rng(0))

    def test_type_ii_brownian(self):
        z = lim.simulate_fbm_typeII(0.0, 256, gens(4000, offset=1)).values
        assert z[:, -1].var() == pytest.approx(1.0, rel=0.07)

    def test_type_ii_variance(self):
        d = 0.3
        z = lim.simulate_fbm_typeII(d, 1024, gens(4000, offset=2)).values
        target = 1 / (1.6 * gamma(1.3) ** 2)
        se = target * np.sqrt(2 / 3999)
        assert abs(z[:, -1].var() - target) < 4 * se + 0.02 * target  # + discretisation bias


class TestFunctionals:
    def test_quadratic_values(self):
        p = path(U**2)
        assert lim.q_functional(p, 1.0) == pytest.approx(1 / 180, rel=0.01)
        assert lim.q_tilde_functional(p, 1.0) == pytest.approx(1 / 30, rel=0.01)

    @pytest.mark.parametrize("grid", [256, 1024, 4096])
    def test_riemann_convergence(self, grid):
        u = np.arange(grid + 1) / grid
        err = abs(lim.q_functional(path(u**2), 1.0) - 1 / 180)
        assert err < 1.0 / grid

    @pytest.mark.parametrize("tau", [0.25, 0.5, 1.0])
    def test_line_is_zero(self, tau):
        p = path(3.0 * U)
        assert abs(lim.q_functional(p, tau)) < 1e-12
        assert abs(lim.q_tilde_functional(p, tau)) < 1e-12

    @pytest.mark.parametrize("values", [U, U**2, -3 * U + 5 * U**2])
    def test_detrended_annihilates(self, values):
        for tau in (0.25, 0.5, 1.0):
            assert abs(lim.q_detrended_functional(path(values), tau)) < 1e-10

    @pytest.mark.parametrize("seed", range(5))
    def test_bridge_constraints(self, seed):
        p = brownian(seed)
        for tau in (0.125, 0.5, 0.75):
            b = lim.detrended_bridge(p, tau)
            k = int(tau * N)
            assert b[0] == 0.0
            assert abs(b[-1]) <= 5 / N
            assert abs(b[1:].sum() / N) <= 5 / N
            assert b.size == k + 1

    def test_off_grid(self):
        with pytest.raises(ValueError):
            lim.q_functional(path(U), 0.3)

    @given(st.integers(0, 10_000), st.floats(0.01, 100))
    def test_ordering_and_scale(self, seed, c):
        p = brownian(seed, 256)
        for tau in (0.25, 0.5, 1.0):
            q, qt = lim.q_functional(p, tau), lim.q_tilde_functional(p, tau)
            assert 0 <= q <= qt * (1 + 1e-12)
            scaled = lim.LimitPath(c * p.values, "typeI", 0.0)
            assert lim.q_functional(scaled, tau) == pytest.approx(c**2 * q, rel=1e-9)

    def test_tilde_minus_plain_is_squared_mean(self):
        p = brownian(3)
        tau = 0.5
        k = int(tau * N)
        z = p.values
        dev = z[1 : k + 1] - (np.arange(1, k + 1) / N) / tau * z[k]
        mean_term = (dev.sum() / N) ** 2 / tau**3
        diff = lim.q_tilde_functional(p, tau) - lim.q_functional(p, tau)
        assert diff == pytest.approx(mean_term, rel=1e-9)

    def test_q_star_is_reversed_path(self):
        p = brownian(4)
        rev = p.values[-1] - p.values[::-1]
        assert lim.q_star(p, 0.25) == pytest.approx(lim.q_functional(path(rev), 0.75), rel=1e-12)

    @pytest.mark.parametrize("functional, point", [
        ("Q", lim.q_functional), ("Q_tilde", lim.q_tilde_functional), ("Q_trend", lim.q_detrended_functional),
    ])
    def test_profiles_match_point_functionals(self, functional, point):
        p = lim.simulate_fbm_typeI(0.7, 512, np.random.default_rng(5))
        fwd, bwd = lim.functional_profiles(p.values, functional)
        rev = lim.reversed_path(p)
        for k in (16, 100, 256, 511):
            assert fwd[k - 1] == pytest.approx(point(p, k / 512), rel=1e-8)
            assert bwd[k - 1] == pytest.approx(point(rev, k / 512), rel=1e-8)


class TestLimitStatistic:
    def test_single_point_interval(self):
        p = brownian(6, 256)
        iv = TestingInterval(0.5, 0.501)
        w = lim.limit_statistic(p, iv, StatKind("W")).value
        i = lim.limit_statistic(p, iv, StatKind("I")).value
        assert w == pytest.approx(i * 256, rel=1e-12)
        ratio = lim.q_star(p, 0.5) / lim.q_functional(p, 0.5)
        assert w == pytest.approx(ratio, rel=1e-8)

    @pytest.mark.parametrize("seed", range(5))
    def test_integral_below_sup(self, seed):
        p = brownian(seed, 512)
        iv = TestingInterval.symmetric(0.1)
        w = lim.limit_statistic(p, iv, StatKind("W")).value
        i = lim.limit_statistic(p, iv, StatKind("I")).value
        assert 0 < i <= (iv.tau_high - iv.tau_low + 1 / 512) * w

    def test_scale_invariance(self):
        p = brownian(7, 512)
        iv = TestingInterval.symmetric(0.1)
        for f in FUNCTIONALS:
            for d in DIRECTIONS:
                kind = StatKind(f, direction=d)
                a = lim.limit_statistic(p, iv, kind).value
                b = lim.limit_statistic(lim.LimitPath(-4 * p.values, "typeI", 0), iv, kind).value
                assert a == pytest.approx(b, rel=1e-9)

    def test_batch_matches_single(self):
        z = lim.simulate_fbm_typeI(0.2, 256, gens(4, offset=3)).values
        iv = TestingInterval.symmetric(0.1)
        kinds = [("I", "increase"), ("R", "two_sided_max")]
        for fn in lim.LIMIT_FUNCTIONALS:
            out = lim.limit_statistic_batch(z, iv, kinds, fn)
            for r in range(4):
                p = lim.LimitPath(z[r], "typeI", 0.2)
                for f, d in kinds:
                    single = lim.limit_statistic(p, iv, StatKind(f, direction=d), fn).value
                    assert out[(f, d)][r] == pytest.approx(single, rel=1e-12)

    def test_degenerate_path(self):
        with pytest.raises(Exception):
            lim.limit_statistic(path(U), TestingInterval.symmetric(0.1), StatKind("W"))
