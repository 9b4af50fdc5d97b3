import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from memchange import estimator as est
from memchange.errors import InvalidSeries
from memchange.models import RngStream, simulate_farima


def farima_rows(d, n, reps, tag):
    return np.stack([
        simulate_farima(n, d, rng=RngStream(11, (tag, r)).generator()) for r in range(reps)
    ])


class TestPeriodogram:
    def test_constant_is_zero(self):
        pg = est.periodogram(np.full(64, 3.5))
        np.testing.assert_allclose(pg.ordinates, 0, atol=1e-20)

    def test_shape_and_frequencies(self):
        pg = est.periodogram(np.random.default_rng(0).standard_normal(101))
        assert pg.ordinates.size == 50 and pg.n == 101
        np.testing.assert_allclose(pg.frequencies, 2 * np.pi * np.arange(1, 51) / 101)

    def test_cosine_concentrates(self):
        n = 1024
        t = np.arange(1, n + 1)
        pg = est.periodogram(np.sqrt(2) * np.cos(2 * np.pi * t / n))
        assert pg.ordinates[0] / pg.ordinates.sum() >= 0.99

    def test_matches_direct_transform(self):
        x = np.random.default_rng(1).standard_normal(40)
        t = np.arange(1, 41)
        pg = est.periodogram(x)
        direct = [abs(np.sum(x * np.exp(-1j * t * lam))) ** 2 / (2 * np.pi * 40) for lam in pg.frequencies]
        np.testing.assert_allclose(pg.ordinates, direct, rtol=1e-10)

    @pytest.mark.parametrize("n", [64, 65, 1000, 1001])
    def test_parseval(self, n):
        x = np.random.default_rng(n).standard_normal(n) + 4
        pg = est.periodogram(x)
        total = 2 * pg.ordinates.sum()
        if n % 2 == 0:  # the Nyquist ordinate has no mirror image
            total -= pg.ordinates[-1]
        assert 2 * np.pi / n * total == pytest.approx(x.var(), rel=1e-9)

    def test_too_short(self):
        with pytest.raises(InvalidSeries):
            est.periodogram(np.arange(15.0))


class TestEstimate:
    def test_result_fields(self):
        x = np.random.default_rng(2).standard_normal(400)
        res = est.estimate_d(x)
        assert res.bandwidth == 20 and res.method == est.METHOD
        assert est.D_LOW <= res.d_hat <= est.D_HIGH and np.isfinite(res.objective)

    @pytest.mark.parametrize("m", [7, 201])
    def test_bad_bandwidth(self, m):
        with pytest.raises(InvalidSeries):
            est.estimate_d(np.random.default_rng(0).standard_normal(400), m)

    def test_constant_is_degenerate(self):
        with pytest.raises(InvalidSeries):
            est.estimate_d(np.ones(100))

    @settings(max_examples=15)
    @given(st.integers(0, 1000), st.floats(0.01, 100), st.floats(-1e3, 1e3), st.booleans())
    def test_affine_invariance(self, seed, c, a, flip):
        x = np.cumsum(np.random.default_rng(seed).standard_normal(300)) * 0.3
        c = -c if flip else c
        assert est.estimate_d(c * x + a).d_hat == pytest.approx(est.estimate_d(x).d_hat, abs=1e-9)

    def test_batch_matches_single(self):
        x = np.random.default_rng(4).standard_normal((3, 256))
        d_hat, _ = est.estimate_d_batch(x)
        for row, d in zip(x, d_hat):
            assert est.estimate_d(row).d_hat == d

    def test_refinement_beats_coarse_grid(self):
        x = farima_rows(0.3, 500, 1, 1)[0]
        res = est.estimate_d(x)
        obj = est._Objective(x[None, :], res.bandwidth)
        grid = np.arange(est.D_LOW, est.D_HIGH + 1e-9, est.COARSE_STEP)
        assert res.objective <= min(obj(g)[0] for g in grid) + 1e-12

    @pytest.mark.parametrize("d, tol", [(0.0, 0.07), (0.3, 0.07), (0.8, 0.1), (1.0, 0.1), (1.3, 0.12)])
    def test_consistency_quick(self, d, tol):
        x = farima_rows(d, 2000, 40, int(100 * d) + 10)
        d_hat, _ = est.estimate_d_batch(x)
        assert abs(d_hat.mean() - d) < tol


class TestDetrended:
    @settings(max_examples=15)
    @given(st.integers(0, 1000), st.floats(-100, 100), st.floats(-10, 10))
    def test_trend_invariance(self, seed, a, b):
        x = np.random.default_rng(seed).standard_normal(300)
        t = np.arange(1, 301)
        ref = est.estimate_d_detrended(x).d_hat
        assert est.estimate_d_detrended(x + a + b * t).d_hat == pytest.approx(ref, abs=1e-6)

    def test_linear_is_degenerate(self):
        with pytest.raises(InvalidSeries):
            est.estimate_d_detrended(2 + 0.5 * np.arange(100))

    def test_method_tag(self):
        res = est.estimate_d_detrended(np.random.default_rng(0).standard_normal(100))
        assert res.method.endswith("detrended")

    def test_detrend_rows_matches_residuals(self):
        from memchange.detrend import residuals

        x = np.random.default_rng(3).standard_normal((2, 50)) + np.arange(50)
        for row, r in zip(x, est.detrend_rows(x)):
            np.testing.assert_allclose(r, residuals(row), atol=1e-10)

    def test_trend_plus_noise(self):
        t = np.arange(1, 2001)
        rng = np.random.default_rng(5)
        x = 1 + 0.01 * t + rng.standard_normal((100, 2000))
        d_hat, _ = est.estimate_d_batch(est.detrend_rows(x))
        assert abs(d_hat.mean()) < 0.07

    def test_trended_farima(self):
        t = np.arange(1, 2001)
        x = farima_rows(0.3, 2000, 40, 2) + 1 + 0.01 * t
        d_hat, _ = est.estimate_d_batch(est.detrend_rows(x))
        assert abs(d_hat.mean() - 0.3) < 0.07
