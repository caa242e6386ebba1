import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from witsda.quadrature import (
    TRUNCATION,
    GaussianSpec,
    Grid1D,
    expect_over_noise,
    gauss_density,
    log_gauss_density,
    make_source_grid,
    uniform_grid,
)


class TestGaussianSpec:
    @pytest.mark.parametrize("std", [0.0, -1.0, math.inf, math.nan])
    def test_rejects_bad_std(self, std):
        with pytest.raises(ValueError):
            GaussianSpec(0.0, std)

    def test_rejects_bad_mean(self):
        with pytest.raises(ValueError):
            GaussianSpec(math.nan, 1.0)

    def test_density_matches_scipy(self):
        g = GaussianSpec(0.7, 2.3)
        x = np.linspace(-10, 10, 41)
        np.testing.assert_allclose(gauss_density(x, g), stats.norm.pdf(x, 0.7, 2.3), rtol=1e-13)
        assert isinstance(log_gauss_density(0.1, g), float)


class TestGrids:
    def test_uniform_grid_weights_are_spacing(self):
        g = uniform_grid(-2.0, 3.0, 11)
        np.testing.assert_allclose(g.weights, 0.5)
        assert g.step == pytest.approx(0.5)
        assert len(g) == 11

    @pytest.mark.parametrize("args", [(0.0, 1.0, 1), (1.0, 1.0, 5), (2.0, 1.0, 5)])
    def test_uniform_grid_errors(self, args):
        with pytest.raises(ValueError):
            uniform_grid(*args)

    def test_grid_validation(self):
        with pytest.raises(ValueError):
            Grid1D(np.array([0.0, 1.0, 3.0]), np.ones(3))
        with pytest.raises(ValueError):
            Grid1D(np.array([0.0, -1.0]), np.ones(2))
        with pytest.raises(ValueError):
            Grid1D(np.array([0.0, 1.0]), np.array([1.0, -1.0]))
        with pytest.raises(ValueError):
            Grid1D(np.zeros(3), np.ones(2))

    @pytest.mark.parametrize("n", [1, 2, 4, 500])
    def test_source_grid_needs_odd_count(self, n):
        with pytest.raises(ValueError):
            make_source_grid(GaussianSpec(0.0, 1.0), n)

    def test_source_grid_layout(self):
        g = make_source_grid(GaussianSpec(0.0, 5.0), 501)
        assert g.points[250] == 0.0
        assert g.start == pytest.approx(-TRUNCATION * 5.0)
        np.testing.assert_allclose(g.points[::-1], -g.points, atol=1e-12)
        np.testing.assert_allclose(g.weights[::-1], g.weights, rtol=1e-12)
        assert g.weights.sum() == pytest.approx(1.0, abs=1e-14)

    def test_moments_match_truncated_normal(self):
        # the uniform-grid sum is spectrally accurate for the smooth density
        g = make_source_grid(GaussianSpec(0.0, 5.0), 501)
        tn = stats.truncnorm(-TRUNCATION, TRUNCATION, loc=0.0, scale=5.0)
        np.testing.assert_allclose(g.weights @ g.points ** 2, tn.var(), rtol=1e-5)
        np.testing.assert_allclose(g.weights @ g.points ** 4, tn.moment(4), rtol=1e-4)

    def test_cosine_expectation_mpmath(self):
        # E cos(x) for x ~ N(0, 1) truncated to +-5, by adaptive quadrature
        num = mpmath.quad(lambda t: mpmath.cos(t) * mpmath.npdf(t), [-5, 0, 5])
        den = mpmath.ncdf(5) - mpmath.ncdf(-5)
        got = expect_over_noise(np.cos, GaussianSpec(0.0, 1.0), 201)
        np.testing.assert_allclose(got, float(num / den), rtol=2e-6)

    def test_expect_over_noise_table(self):
        g = make_source_grid(GaussianSpec(0.0, 1.0), 101)
        assert expect_over_noise(np.ones(101), GaussianSpec(0.0, 1.0), 101) == pytest.approx(1.0)
        assert expect_over_noise(g.points, GaussianSpec(0.0, 1.0), 101) == pytest.approx(0.0, abs=1e-15)
        with pytest.raises(ValueError):
            expect_over_noise(np.ones(5), GaussianSpec(0.0, 1.0), 101)
        with pytest.raises(ValueError):
            expect_over_noise(np.cos, GaussianSpec(0.0, 1.0), 1)


class TestSourceGridProperties:
    @given(
        mean=st.floats(-10, 10),
        std=st.floats(0.1, 20),
        half=st.integers(1, 300),
    )
    def test_probability_vector_centered(self, mean, std, half):
        g = make_source_grid(GaussianSpec(mean, std), 2 * half + 1)
        assert g.weights.sum() == pytest.approx(1.0, abs=1e-12)
        assert g.points[half] == mean
        assert np.all(g.weights > 0)
        np.testing.assert_allclose(g.weights @ g.points, mean, atol=1e-9 * (1 + abs(mean) + std))


class TestWorkedValues:
    def test_three_point_grid(self):
        g = make_source_grid(GaussianSpec(0.0, 5.0), 3)
        np.testing.assert_array_equal(g.points, [-25.0, 0.0, 25.0])
        e = math.exp(-12.5)
        np.testing.assert_allclose(g.weights, [e / (1 + 2 * e), 1 / (1 + 2 * e), e / (1 + 2 * e)], rtol=1e-14)

    def test_fine_grids(self):
        assert make_source_grid(GaussianSpec(0.0, 1.0), 1001).weights.sum() == pytest.approx(1.0, abs=1e-12)
        g = make_source_grid(GaussianSpec(0.0, 5.0), 1001)
        assert g.weights @ g.points == pytest.approx(0.0, abs=1e-12)
        tn = stats.truncnorm(-TRUNCATION, TRUNCATION, scale=5.0)
        assert g.weights @ g.points ** 2 == pytest.approx(tn.var(), rel=1e-3)

    def test_density_values(self):
        unit = GaussianSpec(0.0, 1.0)
        assert gauss_density(0.0, unit) == pytest.approx(0.3989422804, abs=1e-10)
        assert gauss_density(1.5, GaussianSpec(1.5, 2.0)) == pytest.approx(1 / (2.0 * math.sqrt(2 * math.pi)))
        assert gauss_density(5.0, unit) == pytest.approx(float(mpmath.npdf(5)), rel=1e-13)
        assert gauss_density(5.0, unit) == pytest.approx(1.4867e-6, rel=1e-4)

    def test_noise_moments(self):
        unit = GaussianSpec(0.0, 1.0)
        assert expect_over_noise(lambda x: np.ones_like(x), unit, 501) == pytest.approx(1.0, abs=1e-14)
        assert expect_over_noise(lambda x: x ** 2, unit, 501) == pytest.approx(1.0, abs=1e-3)
        fourth = stats.truncnorm(-TRUNCATION, TRUNCATION).moment(4)
        assert expect_over_noise(lambda x: x ** 4, unit, 501) == pytest.approx(fourth, abs=1e-4)
        assert expect_over_noise(lambda x: x ** 4, unit, 501) == pytest.approx(3.0, abs=1e-2)
