import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import grid_spec
from oracles import enumerate_cost, staircase_estimator
from witsda.controller import AssociationMatrix, LocalModelBank, RandomizedController, TabulatedController, single_model_controller
from witsda.estimator import EstimatorTable, GridConfig, build_estimator, estimate, observation_grids
from witsda.problem import ProblemSpec, Stage
from witsda.quadrature import GaussianSpec, Grid1D, make_source_grid, uniform_grid


class TestGridConfig:
    def test_presets(self):
        assert GridConfig.fast() == GridConfig(501, 401, 201)
        assert GridConfig.fine() == GridConfig(2001, 1001, 401)
        assert len(GridConfig(11).source_grid(ProblemSpec.wce())) == 11


class TestLinearMMSE:
    @pytest.mark.parametrize("slope", [-0.6, -0.04, 0.0, 0.4])
    def test_single_affine_wce(self, slope):
        p = ProblemSpec.wce()
        src = GridConfig().source_grid(p)
        c = single_model_controller(slope, 0.0, len(src))
        yg, zg = observation_grids(c, p, src, 401)
        assert zg is None
        w = build_estimator(c, p, src, yg)
        s2 = ((1 + slope) * p.sigma_x0) ** 2
        inner = np.abs(yg.points) <= 4 * abs(1 + slope) * p.sigma_x0
        np.testing.assert_allclose(w.values[inner], s2 / (s2 + 1) * yg.points[inner], atol=1e-4)

    def test_single_affine_side_channel(self):
        p = ProblemSpec.side_channel(0.1)
        src = GridConfig().source_grid(p)
        a, b = -0.3, 0.4
        c = single_model_controller(a, 0.0, len(src), slope2=b)
        yg, zg = observation_grids(c, p, src, 401, 201)
        w = build_estimator(c, p, src, yg, zg)
        # joint Gaussian (x1, y, z) with x1 = (1+a) x0, z = b x0 + n2
        s = p.sigma_x0 ** 2
        cov_xo = np.array([(1 + a) ** 2 * s, (1 + a) * b * s])
        cov_oo = np.array([[(1 + a) ** 2 * s + 1, (1 + a) * b * s], [(1 + a) * b * s, b * b * s + 1]])
        gain = np.linalg.solve(cov_oo, cov_xo)
        Y, Z = np.meshgrid(yg.points, zg.points, indexing="ij")
        inner = (np.abs(Y) <= 10) & (np.abs(Z) <= 4)
        np.testing.assert_allclose(w.values[inner], (gain[0] * Y + gain[1] * Z)[inner], atol=1e-4)


class TestEnumerationOracle:
    @given(
        width=st.floats(0.3, 4.0),
        seed=st.integers(0, 10_000),
    )
    def test_toy_staircase(self, width, seed):
        rng = np.random.default_rng(seed)
        x0 = np.sort(rng.uniform(-4, 4, 3))
        x0 = np.linspace(x0[0], x0[0] + 2.0 * rng.uniform(0.5, 2.0), 3)
        wts = rng.dirichlet(np.ones(3))
        src = Grid1D(x0, wts)
        x1 = width * np.round(x0 / width)
        c = TabulatedController(x1 - x0)
        yg = uniform_grid(-9.0, 9.0, 37)
        w = build_estimator(c, ProblemSpec.wce(), src, yg)
        expected = staircase_estimator(x1, wts, grid_spec(yg))
        reach = np.array([v is not None for v in expected])
        np.testing.assert_allclose(w.values[reach], [v for v in expected if v is not None], rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(w.values[~reach], wts @ x1, rtol=1e-12)
        assert w.empty_cells == np.count_nonzero(~reach)

    def test_randomized_side_channel(self, toy_src, toy_y, toy_z):
        rng = np.random.default_rng(1)
        a1, b1 = rng.normal(size=2), rng.normal(size=2)
        a2, b2 = rng.normal(size=2), rng.normal(size=2)
        p1 = rng.dirichlet(np.ones(2), size=3).T
        p2 = rng.dirichlet(np.ones(2), size=3).T
        c = RandomizedController(
            LocalModelBank(Stage.G1, a1, b1), AssociationMatrix(p1),
            LocalModelBank(Stage.G2, a2, b2), AssociationMatrix(p2),
        )
        p = ProblemSpec.side_channel(0.5)
        w = build_estimator(c, p, toy_src, toy_y, toy_z)
        _, est = enumerate_cost(toy_src.points, toy_src.weights, a1, b1, p1, grid_spec(toy_y), p.k1,
                                a2, b2, p2, grid_spec(toy_z), p.k2)
        for (j, l), v in est.items():
            assert w.values[j, l] == pytest.approx(v, rel=1e-12, abs=1e-12)


class TestSymmetry:
    def test_odd_controller_zero_at_origin(self):
        p = ProblemSpec.side_channel(0.2)
        src = GridConfig(201).source_grid(p)
        x0 = src.points
        c = TabulatedController(5.0 * np.sign(x0) - x0 + 0.1 * x0, 0.3 * np.sign(x0) * np.abs(x0) ** 0.5)
        # the source grid has a point at 0 whose g1 is 0 here; odd everywhere
        np.testing.assert_allclose(c.g1_values[::-1], -c.g1_values, atol=1e-12)
        yg, zg = observation_grids(c, p, src, 401, 201)
        w = build_estimator(c, p, src, yg, zg)
        assert abs(w.values[200, 100]) < 1e-9
        wy = build_estimator(TabulatedController(c.g1_values), ProblemSpec.wce(), src, yg)
        assert abs(wy.values[200]) < 1e-9

    def test_staircase_five_points(self):
        src = make_source_grid(GaussianSpec(0.0, 5.0), 5)
        x1 = np.where(src.points >= 0, 4.0, -4.0)
        yg = uniform_grid(-9.0, 9.0, 73)
        w = build_estimator(TabulatedController(x1 - src.points), ProblemSpec.wce(), src, yg)
        expected = staircase_estimator(x1, src.weights, grid_spec(yg))
        np.testing.assert_allclose(w.values, expected, rtol=1e-12, atol=1e-12)


class TestEstimatorTable:
    def test_empty_cells_take_prior_mean(self):
        src = Grid1D(np.array([0.0]), np.array([1.0]))
        c = TabulatedController(np.array([2.0]))
        yg = uniform_grid(-60.0, 60.0, 121)
        w = build_estimator(c, ProblemSpec.wce(), src, yg)
        assert w.empty_cells > 0
        np.testing.assert_allclose(w.values, 2.0)

    def test_shape_checked(self):
        yg = uniform_grid(-1.0, 1.0, 3)
        with pytest.raises(ValueError):
            EstimatorTable(yg, None, np.zeros(4))
        with pytest.raises(ValueError):
            EstimatorTable(yg, None, np.array([0.0, np.nan, 0.0]))

    def test_side_channel_requirements(self):
        p = ProblemSpec.side_channel(1.0)
        src = make_source_grid(GaussianSpec(0.0, 5.0), 5)
        yg = uniform_grid(-1.0, 1.0, 3)
        with pytest.raises(ValueError):
            build_estimator(TabulatedController(np.zeros(5)), p, src, yg, yg)
        with pytest.raises(ValueError):
            build_estimator(TabulatedController(np.zeros(5), np.zeros(5)), p, src, yg)

    def test_linear_interpolation_and_clamp(self):
        yg = uniform_grid(0.0, 2.0, 3)
        w = EstimatorTable(yg, None, np.array([0.0, 1.0, 4.0]))
        assert estimate(w, 1.5) == pytest.approx(2.5)
        assert estimate(w, 1.0) == 1.0
        assert estimate(EstimatorTable(yg, None, np.array([1.0, 3.0, 3.0])), 0.5) == pytest.approx(2.0)
        np.testing.assert_allclose(estimate(w, np.array([-1.0, 0.5, 9.0])), [0.0, 0.5, 4.0])
        assert w.diagnostics["clamped"] == 2

    def test_bilinear(self):
        yg = uniform_grid(0.0, 1.0, 2)
        zg = uniform_grid(0.0, 1.0, 2)
        w = EstimatorTable(yg, zg, np.array([[0.0, 1.0], [2.0, 3.0]]))
        assert estimate(w, 0.5, 0.5) == pytest.approx(1.5)
        np.testing.assert_allclose(estimate(w, np.array([0.25, 1.0]), 0.0), [0.5, 2.0])
        with pytest.raises(ValueError):
            estimate(w, 0.5)

    def test_observation_grid_covers_support(self):
        p = ProblemSpec.side_channel(1.0)
        src = make_source_grid(GaussianSpec(0.0, 5.0), 11)
        c = TabulatedController(np.linspace(-3, 7, 11), np.full(11, 2.0))
        yg, zg = observation_grids(c, p, src, 51, 31)
        x1 = src.points + c.g1_values
        assert yg.stop == pytest.approx(np.max(np.abs(x1)) + 5.0)
        assert zg.stop == pytest.approx(7.0)
        assert len(yg) == 51 and len(zg) == 31
