import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import SERIES_KINDS, oracle_detrended_v, random_series
from memchange import core_stats as cs
from memchange import detrend as dt
from memchange.core_stats import StatKind, TestingInterval
from memchange.errors import DegenerateDenominator, WindowTooShort

finite = st.floats(-100, 100, allow_nan=False, allow_infinity=False)
noise = arrays(np.float64, st.integers(30, 80), elements=finite).filter(
    lambda x: np.ptp(np.diff(x[:3])) > 1e-2 and np.ptp(np.diff(x[-3:])) > 1e-2
)


class TestFit:
    def test_exact_line(self):
        fit = dt.fit_trend([3.0, 5.0, 7.0])
        assert fit.intercept == pytest.approx(1.0) and fit.slope == pytest.approx(2.0)

    def test_hand_example(self):
        fit = dt.fit_trend([1.0, 2.0, 4.0])
        assert fit.slope == pytest.approx(1.5) and fit.intercept == pytest.approx(-2 / 3)

    def test_constant(self):
        fit = dt.fit_trend([4.0] * 6)
        assert fit.slope == pytest.approx(0.0, abs=1e-15) and fit.intercept == pytest.approx(4.0)

    def test_sub_window_uses_absolute_positions(self):
        x = 1 + 2 * np.arange(1, 11, dtype=float)
        fit = dt.fit_trend(x, range(5, 11))
        assert fit.intercept == pytest.approx(1.0) and fit.slope == pytest.approx(2.0)

    def test_window_too_short(self):
        with pytest.raises(WindowTooShort):
            dt.fit_trend([1.0, 2.0])


class TestResidualSums:
    def test_hand_example(self):
        np.testing.assert_allclose(dt.residual_partial_sums([1.0, 2.0, 4.0], 3), [1 / 6, -1 / 6, 0], atol=1e-14)

    def test_linear_input(self):
        x = 0.5 - 3 * np.arange(1, 13)
        np.testing.assert_allclose(dt.residual_partial_sums(x, 12), 0, atol=1e-12)
        np.testing.assert_allclose(dt.residual_partial_sums_star(x, 4), 0, atol=1e-12)

    @given(arrays(np.float64, st.integers(5, 40), elements=finite), st.data())
    def test_full_window_sum_vanishes(self, x, data):
        k = data.draw(st.integers(3, x.size))
        scale = 1 + np.abs(x).sum()
        assert abs(dt.residual_partial_sums(x, k)[-1]) <= 1e-10 * scale

    def test_star_window_bounds(self):
        with pytest.raises(WindowTooShort):
            dt.residual_partial_sums_star(np.arange(10.0), 8)


class TestDetrendedVariance:
    def test_linear_is_zero(self):
        x = 2 + 0.3 * np.arange(1, 21)
        assert dt.v_detrended(x, 10) == pytest.approx(0, abs=1e-20)

    def test_example_against_oracle(self):
        x = [1.0, 2.0, 4.0, 0.0, 1.0, 3.0]
        assert dt.v_detrended(x, 3) == pytest.approx(oracle_detrended_v(x[:3]), rel=1e-12)
        assert dt.v_detrended_star(x, 3) == pytest.approx(oracle_detrended_v(x[3:][::-1]), rel=1e-12)

    @given(arrays(np.float64, 25, elements=finite), finite, finite, st.integers(3, 25))
    def test_trend_invariance(self, x, a, b, k):
        t = np.arange(1, 26)
        ref = dt.v_detrended(x, k)
        scale = (1 + np.abs(x).max()) ** 2
        assert dt.v_detrended(x + a + b * t, k) == pytest.approx(ref, abs=1e-8 * scale)

    @given(arrays(np.float64, 25, elements=finite), st.floats(0.1, 10), st.integers(3, 25))
    def test_scale_equivariance(self, x, c, k):
        assert dt.v_detrended(c * x, k) == pytest.approx(c**2 * dt.v_detrended(x, k), rel=1e-9, abs=1e-12)

    @pytest.mark.parametrize("kind", SERIES_KINDS)
    def test_fast_path_matches_oracle(self, kind):
        rng = np.random.default_rng(len(kind))
        for _ in range(4):
            n = int(rng.integers(8, 120))
            x = random_series(rng, n, kind)
            fwd = dt.forward_detrended_estimates(x)
            bwd = dt.backward_detrended_estimates(x)
            xs = x.tolist()
            for k in range(3, n + 1):
                np.testing.assert_allclose(fwd[k - 1], oracle_detrended_v(xs[:k]), rtol=1e-9)
                np.testing.assert_allclose(bwd[k - 1], oracle_detrended_v(xs[n - k:][::-1]), rtol=1e-9)


class TestDetrendedStatistic:
    @given(noise, finite, finite)
    def test_trend_invariance(self, x, a, b):
        iv = TestingInterval.symmetric(0.1)
        t = np.arange(1, x.size + 1)
        for f in cs.FUNCTIONALS:
            kind = StatKind(f)
            ref = dt.detrended_statistic(x, iv, kind)
            assert dt.detrended_statistic(x + a + b * t, iv, kind) == pytest.approx(ref, rel=1e-6)

    def test_huge_trend_matches_raw_noise(self):
        iv = TestingInterval.symmetric(0.1)
        t = np.arange(1, 501)
        diffs = []
        for seed in range(30):
            x = np.random.default_rng(seed).standard_normal(500)
            trended = dt.detrended_statistic(x + 10 * t, iv, StatKind("W"))
            raw = cs.statistic(x, iv, StatKind("W"))
            diffs.append(np.log(trended / raw))
        # same noise, different estimator: log-ratio centred near zero
        assert abs(np.median(diffs)) < 0.5

    def test_quadratic_is_finite(self):
        x = np.arange(1, 41, dtype=float) ** 2
        assert np.isfinite(dt.detrended_statistic(x, TestingInterval.symmetric(0.1), StatKind("W")))

    def test_linear_is_degenerate(self):
        with pytest.raises(DegenerateDenominator):
            dt.detrended_statistic(1 + 2 * np.arange(40.0), TestingInterval.symmetric(0.1))

    def test_batch_matches_single(self):
        rng = np.random.default_rng(2)
        x = np.cumsum(rng.standard_normal((4, 90)), axis=1)
        iv = TestingInterval.symmetric(0.1)
        kinds = [(f, d) for f in cs.FUNCTIONALS for d in cs.DIRECTIONS]
        out = dt.detrended_statistic_batch(x, iv, kinds)
        for (f, d), values in out.items():
            for row, v in zip(x, values):
                assert v == pytest.approx(dt.detrended_statistic(row, iv, StatKind(f, direction=d)), rel=1e-12)
