"""Fast invariant checks runnable from the command line (``witsda selftest``)."""
from __future__ import annotations

import numpy as np

from . import kernels
from .baselines import DeterministicMapping, MappingKind, affine_cost, evaluate_mapping, witsenhausen_one_step
from .controller import AssociationMatrix, LocalModelBank, RandomizedController, entropy, quench_assoc
from .estimator import GridConfig, build_estimator, observation_grids
from .free_energy import gibbs_update, stage_gradient, expected_cost
from .problem import ProblemSpec, Stage
from .quadrature import make_source_grid


def _gibbs():
    rng = np.random.default_rng(1)
    costs = rng.normal(size=(4, 50))
    q = gibbs_update(costs, 0.3).probs
    shifted = gibbs_update(costs + rng.normal(size=50), 0.3).probs
    hard = quench_assoc(costs).probs
    cold = gibbs_update(costs, 1e-6).probs
    ok = (
        np.max(np.abs(q.sum(axis=0) - 1)) < 1e-12
        and np.max(np.abs(q - shifted)) < 1e-12
        and np.max(np.abs(gibbs_update(costs, 1e12).probs - 0.25)) < 1e-9
        and np.array_equal(np.argmax(cold, axis=0), np.argmax(hard, axis=0))
    )
    return ok, "normalization, shift invariance, limits"


def _zero_mapping():
    p = ProblemSpec.wce()
    bd = evaluate_mapping(DeterministicMapping(MappingKind.AFFINE, {"slope1": 0.0}), p)
    return abs(bd.total_D - 25 / 26) < 2e-3, f"cost {bd.total_D:.6f} vs 25/26"


def _one_step():
    bd = evaluate_mapping(witsenhausen_one_step(ProblemSpec.wce()), ProblemSpec.wce())
    return abs(bd.total_D - 0.404253) < 2e-3, f"cost {bd.total_D:.6f}"


def _affine_estimator():
    p = ProblemSpec.wce()
    grids = GridConfig()
    src = grids.source_grid(p)
    slope = -0.3
    bank = LocalModelBank(Stage.G1, [slope], [0.0])
    c = RandomizedController(bank, AssociationMatrix(np.ones((1, src.points.size))))
    yg, _ = observation_grids(c, p, src, grids.n_y)
    w = build_estimator(c, p, src, yg)
    s2 = (1 + slope) ** 2 * p.sigma_x0 ** 2
    lin = s2 / (s2 + 1) * yg.points
    inner = np.abs(yg.points) <= 4 * (1 + slope) * p.sigma_x0
    err = float(np.max(np.abs(w.values[inner] - lin[inner])))
    bd = expected_cost(c, w, p, src)
    exact = affine_cost(p, slope)
    return err < 1e-4 and abs(bd.total_D - exact) < 1e-4, f"max dev {err:.2e}, cost {bd.total_D:.6f} vs {exact:.6f}"


def _gradient():
    p = ProblemSpec.wce()
    src = make_source_grid(p.source, 41)
    bank = LocalModelBank(Stage.G1, [-0.5, 0.2], [1.0, -0.7])
    rng = np.random.default_rng(3)
    probs = rng.uniform(0.1, 1.0, (2, 41))
    c = RandomizedController(bank, AssociationMatrix(probs / probs.sum(axis=0)))
    yg, _ = observation_grids(c, p, src, 201)
    w = build_estimator(c, p, src, yg)
    g = stage_gradient(c, w, p, src, Stage.G1)
    h = 1e-6
    worst = 0.0
    for m in range(2):
        for j in range(2):
            d = np.zeros(2)
            d[m] = h
            a, b = bank.slopes.copy(), bank.intercepts.copy()
            fs = []
            for s in (1, -1):
                if j == 0:
                    cc = c.replace(bank1=bank.with_params(a + s * d, b))
                else:
                    cc = c.replace(bank1=bank.with_params(a, b + s * d))
                fs.append(expected_cost(cc, w, p, src).total_D)
            fd = (fs[0] - fs[1]) / (2 * h)
            worst = max(worst, abs(fd - g[m, j]) / max(abs(fd), 1e-8))
    return worst < 1e-4, f"worst relative error {worst:.2e}"


def _backends():
    if "cython" not in kernels.available_backends():
        return True, "compiled backend not built; skipped"
    rng = np.random.default_rng(4)
    centers = rng.normal(0, 3, (3, 30))
    coefs = rng.uniform(size=(2, 3, 30))
    grid = make_source_grid(ProblemSpec.wce().source, 101)
    a = kernels.gauss_mix(centers, coefs, grid, 1.0, backend="cython")
    b = kernels.gauss_mix(centers, coefs, grid, 1.0, backend="python")
    err = float(np.max(np.abs(a - b)))
    return err < 1e-12, f"max difference {err:.1e}"


def _entropy():
    src = make_source_grid(ProblemSpec.wce().source, 11)
    bank = LocalModelBank(Stage.G1, [0.0, 0.0], [0.0, 1.0])
    c = RandomizedController(bank, AssociationMatrix(np.full((2, 11), 0.5)))
    h = entropy(c, src)
    return abs(h - np.log(2)) < 1e-12, f"H = {h:.12f}"


CHECKS = (
    ("gibbs", _gibbs),
    ("entropy", _entropy),
    ("zero-mapping", _zero_mapping),
    ("one-step", _one_step),
    ("affine-estimator", _affine_estimator),
    ("gradient", _gradient),
    ("backends", _backends),
)


def run_selftest(report=print) -> bool:
    ok_all = True
    for name, fn in CHECKS:
        ok, detail = fn()
        ok_all &= bool(ok)
        report(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    return ok_all
