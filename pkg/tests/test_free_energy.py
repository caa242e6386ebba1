import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import grid_spec
from oracles import enumerate_cost
from witsda.baselines import best_affine
from witsda.controller import (
    AssociationMatrix,
    LocalModelBank,
    RandomizedController,
    duplicate_and_perturb,
    entropy,
    quench_assoc,
)
from witsda.estimator import build_estimator, observation_grids
from witsda.free_energy import (
    DescentParams,
    NumericalError,
    _evaluate,
    descend_models,
    expected_cost,
    gibbs_update,
    partial_costs,
    stage_gradient,
)
from witsda.problem import ProblemSpec, Stage
from witsda.quadrature import GaussianSpec, Grid1D, make_source_grid, uniform_grid


def random_controller(rng, n_points, m1=2, m2=None, scale=1.0):
    def stage(st, m):
        bank = LocalModelBank(st, scale * rng.normal(size=m), 2 * scale * rng.normal(size=m))
        probs = rng.dirichlet(np.ones(m), size=n_points).T
        return bank, AssociationMatrix(probs)

    b1, p1 = stage(Stage.G1, m1)
    if m2 is None:
        return RandomizedController(b1, p1)
    b2, p2 = stage(Stage.G2, m2)
    return RandomizedController(b1, p1, b2, p2)


class TestGibbs:
    def test_two_level_values(self):
        q = gibbs_update(np.array([[0.0], [1.0]]), 1.0).probs[:, 0]
        np.testing.assert_allclose(q, [0.731059, 0.268941], atol=1e-6)
        np.testing.assert_allclose(q, [1 / (1 + math.exp(-1)), 1 / (1 + math.e)], rtol=1e-14)

    @given(seed=st.integers(0, 10_000), m=st.integers(1, 6), T=st.floats(1e-3, 1e3))
    def test_normalization_and_shift(self, seed, m, T):
        rng = np.random.default_rng(seed)
        costs = rng.normal(size=(m, 20))
        q = gibbs_update(costs, T).probs
        np.testing.assert_allclose(q.sum(axis=0), 1.0, rtol=0, atol=1e-12)
        shifted = gibbs_update(costs + rng.normal(0, 50, size=20), T).probs
        np.testing.assert_allclose(shifted, q, rtol=0, atol=1e-12)

    @given(seed=st.integers(0, 10_000), m=st.integers(2, 6))
    def test_limits(self, seed, m):
        rng = np.random.default_rng(seed)
        costs = rng.normal(size=(m, 30))
        np.testing.assert_allclose(gibbs_update(costs, 1e12).probs, 1.0 / m, atol=1e-9)
        srt = np.sort(costs, axis=0)
        untied = srt[1] - srt[0] > 1e-3
        cold = gibbs_update(costs, 1e-6).probs
        np.testing.assert_array_equal(
            np.argmax(cold, axis=0)[untied], np.argmax(quench_assoc(costs).probs, axis=0)[untied]
        )

    def test_equal_costs_give_uniform_column(self):
        np.testing.assert_allclose(gibbs_update(np.full((4, 1), 2.5), 0.3).probs[:, 0], 0.25, rtol=1e-15)
        np.testing.assert_allclose(gibbs_update(np.array([[0.0], [7.0]]), 1e9).probs[:, 0], 0.5, atol=1e-8)

    def test_errors(self):
        with pytest.raises(ValueError):
            gibbs_update(np.zeros((2, 2)), 0.0)
        with pytest.raises(ValueError):
            gibbs_update(np.array([[np.inf], [0.0]]), 1.0)


class TestAgainstEnumeration:
    @given(seed=st.integers(0, 100_000), n=st.integers(1, 3), m1=st.integers(1, 2), m2=st.integers(1, 2))
    def test_side_channel(self, seed, n, m1, m2):
        rng = np.random.default_rng(seed)
        src = Grid1D(np.linspace(-1.0, 1.0, n) if n > 1 else np.zeros(1), rng.dirichlet(np.ones(n)))
        c = random_controller(rng, n, m1, m2)
        p = ProblemSpec.side_channel(rng.uniform(0.05, 1.0), sigma_n2=rng.uniform(0.5, 2.0))
        yg, zg = observation_grids(c, p, src, 33, 29)
        w = build_estimator(c, p, src, yg, zg)
        bd = expected_cost(c, w, p, src)
        P1, P2 = c.assoc1.probs, c.assoc2.probs
        D, _ = enumerate_cost(src.points, src.weights, c.bank1.slopes, c.bank1.intercepts, P1.tolist(),
                              grid_spec(yg), p.k1, c.bank2.slopes, c.bank2.intercepts, P2.tolist(),
                              grid_spec(zg), p.k2, p.sigma_n2)
        assert bd.total_D == pytest.approx(D, abs=1e-10, rel=1e-10)

    @given(seed=st.integers(0, 100_000), m1=st.integers(1, 2))
    def test_wce(self, seed, m1):
        rng = np.random.default_rng(seed)
        src = Grid1D(np.array([-2.0, 0.0, 2.0]), rng.dirichlet(np.ones(3)))
        c = random_controller(rng, 3, m1)
        p = ProblemSpec.wce()
        yg, _ = observation_grids(c, p, src, 41)
        w = build_estimator(c, p, src, yg)
        bd = expected_cost(c, w, p, src, T=0.3)
        D, _ = enumerate_cost(src.points, src.weights, c.bank1.slopes, c.bank1.intercepts,
                              c.assoc1.probs.tolist(), grid_spec(yg), p.k1)
        assert bd.total_D == pytest.approx(D, abs=1e-10, rel=1e-10)
        assert bd.free_energy_F == pytest.approx(bd.total_D - 0.3 * entropy(c, src), abs=1e-14)
        assert bd.side_power_cost == 0.0 and bd.rms_g2 == 0.0

    def test_breakdown_parts(self, toy_src, toy_y, toy_z):
        rng = np.random.default_rng(3)
        c = random_controller(rng, 3, 2, 2)
        p = ProblemSpec.side_channel(0.7)
        w = build_estimator(c, p, toy_src, toy_y, toy_z)
        bd = expected_cost(c, w, p, toy_src)
        g2 = c.g2(toy_src.points)
        power = toy_src.weights @ (c.assoc2.probs * g2 * g2).sum(axis=0)
        assert bd.rms_g2 == pytest.approx(math.sqrt(power))
        assert bd.side_power_cost == pytest.approx(0.49 * power)
        assert bd.cost == pytest.approx(bd.total_D - bd.side_power_cost)

    def test_partial_costs_average_to_total(self, toy_src, toy_y, toy_z):
        rng = np.random.default_rng(4)
        c = random_controller(rng, 3, 2, 2)
        p = ProblemSpec.side_channel(0.7)
        w = build_estimator(c, p, toy_src, toy_y, toy_z)
        bd = expected_cost(c, w, p, toy_src)
        pc1 = partial_costs(c, w, p, toy_src, Stage.G1)
        pc2 = partial_costs(c, w, p, toy_src, "g2")
        total1 = toy_src.weights @ (c.assoc1.probs * pc1).sum(axis=0) + bd.side_power_cost
        total2 = toy_src.weights @ (c.assoc2.probs * pc2).sum(axis=0) + bd.control_cost
        assert total1 == pytest.approx(bd.total_D, rel=1e-12)
        assert total2 == pytest.approx(bd.total_D, rel=1e-12)

    def test_g2_partials_need_side_channel(self, toy_src, toy_y):
        c = random_controller(np.random.default_rng(0), 3)
        w = build_estimator(c, ProblemSpec.wce(), toy_src, toy_y)
        with pytest.raises(ValueError):
            partial_costs(c, w, ProblemSpec.wce(), toy_src, Stage.G2)


def _fd_gradient(c, w, p, src, stage, h=1e-6):
    bank = c.bank1 if stage is Stage.G1 else c.bank2
    key = "bank1" if stage is Stage.G1 else "bank2"
    out = np.zeros((len(bank), 2))
    for m in range(len(bank)):
        for j in range(2):
            vals = []
            for s in (1.0, -1.0):
                a, b = bank.slopes.copy(), bank.intercepts.copy()
                (a if j == 0 else b)[m] += s * h
                vals.append(expected_cost(c.replace(**{key: bank.with_params(a, b)}), w, p, src).total_D)
            out[m, j] = (vals[0] - vals[1]) / (2 * h)
    return out


class TestGradient:
    @pytest.mark.parametrize("seed", range(50))
    def test_matches_central_differences(self, seed):
        rng = np.random.default_rng(1000 + seed)
        side = seed % 2 == 1
        src = make_source_grid(GaussianSpec(0.0, 5.0), 21)
        p = ProblemSpec.side_channel(rng.uniform(0.1, 1.0)) if side else ProblemSpec.wce()
        c = random_controller(rng, 21, 2, 2 if side else None, scale=0.7)
        yg, zg = observation_grids(c, p, src, 121, 61)
        w = build_estimator(c, p, src, yg, zg)
        for stage in ([Stage.G1, Stage.G2] if side else [Stage.G1]):
            g = stage_gradient(c, w, p, src, stage)
            fd = _fd_gradient(c, w, p, src, stage)
            rel = np.linalg.norm(g - fd) / np.linalg.norm(fd)
            assert rel < 1e-4, (stage, rel)


class TestDescent:
    def test_never_increases_model_objectives(self):
        rng = np.random.default_rng(7)
        src = make_source_grid(GaussianSpec(0.0, 5.0), 41)
        p = ProblemSpec.side_channel(0.3)
        c = random_controller(rng, 41, 3, 2)
        yg, zg = observation_grids(c, p, src, 151, 81)
        w = build_estimator(c, p, src, yg, zg)
        before = expected_cost(c, w, p, src).total_D
        steps = None
        for _ in range(5):
            c, info = descend_models(c, w, p, src, 0.0, DescentParams(), steps)
            steps = info.steps
            after = expected_cost(c, w, p, src).total_D
            assert after <= before + 1e-12
            before = after
        assert info.accepted > 0
        assert len(steps) == 2

    def test_fixed_point_at_stationary_model(self):
        src = make_source_grid(GaussianSpec(0.0, 5.0), 41)
        p = ProblemSpec.wce()
        c = RandomizedController(LocalModelBank(Stage.G1, [-1.0], [0.0]), AssociationMatrix.uniform(1, 41))
        yg, _ = observation_grids(c, p, src, 101)
        w = build_estimator(c, p, src, yg)
        c2, _ = descend_models(c, w, p, src, 0.0, DescentParams(iterations=3))
        # with x1 == 0 everywhere the estimator is zero and the cheapest move is g1 -> smaller
        assert expected_cost(c2, w, p, src).total_D <= expected_cost(c, w, p, src).total_D

    def test_single_affine_model_descends_to_best_affine(self):
        src = make_source_grid(GaussianSpec(0.0, 5.0), 101)
        p = ProblemSpec.wce()
        c = RandomizedController(LocalModelBank(Stage.G1, [0.5], [0.0]), AssociationMatrix.uniform(1, 101))
        yg, _ = observation_grids(c, p, src, 241)
        w = build_estimator(c, p, src, yg)
        costs = [expected_cost(c, w, p, src).total_D]
        steps = None
        for _ in range(40):
            c, info = descend_models(c, w, p, src, 0.0, DescentParams(), steps)
            steps = info.steps
            w = build_estimator(c, p, src, yg)
            costs.append(expected_cost(c, w, p, src).total_D)
        assert np.all(np.diff(costs) <= 1e-12)
        assert costs[-1] < costs[0]
        mapping, cost = best_affine(p)
        assert costs[-1] == pytest.approx(cost, rel=2e-3)

    def test_size_mismatch(self, toy_src, toy_y):
        c = random_controller(np.random.default_rng(0), 3)
        w = build_estimator(c, ProblemSpec.wce(), toy_src, toy_y)
        with pytest.raises(ValueError):
            expected_cost(c, w, ProblemSpec.wce(), make_source_grid(GaussianSpec(0.0, 1.0), 5))
        with pytest.raises(ValueError):
            expected_cost(c, w, ProblemSpec.side_channel(1.0), toy_src)

    def test_evaluate_returns_partials(self, toy_src, toy_y):
        c = random_controller(np.random.default_rng(2), 3)
        p = ProblemSpec.wce()
        w = build_estimator(c, p, toy_src, toy_y)
        bd, cost1 = _evaluate(c, w, p, toy_src)
        np.testing.assert_allclose(cost1, partial_costs(c, w, p, toy_src, Stage.G1))
        assert NumericalError.__mro__[1] is RuntimeError


class TestDuplicationNeutral:
    @pytest.mark.parametrize("side", [False, True])
    def test_zero_offset_copies_leave_cost_unchanged(self, side):
        rng = np.random.default_rng(3)
        src = make_source_grid(GaussianSpec(0.0, 5.0), 31)
        p = ProblemSpec.side_channel(0.3) if side else ProblemSpec.wce()
        c = random_controller(rng, 31, 3, 2 if side else None)
        yg, zg = observation_grids(c, p, src, 151, 81 if side else None)
        w = build_estimator(c, p, src, yg, zg)
        b1, a1, ok = duplicate_and_perturb(c.bank1, c.assoc1, 0.0, 0)
        assert ok
        d = RandomizedController(b1, a1, c.bank2, c.assoc2) if side else RandomizedController(b1, a1)
        assert expected_cost(d, w, p, src).total_D == pytest.approx(expected_cost(c, w, p, src).total_D, abs=1e-10)
        assert entropy(d, src) - entropy(c, src) == pytest.approx(math.log(2), abs=1e-12)
