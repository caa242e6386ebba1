"""Free energy F = D - T H of a randomized controller and its minimization steps.

All noise expectations go through the discretized observation channel of
:mod:`witsda.estimator`.  For stage ``g1`` the per-point estimation error is

    e1(x0, x1) = sum_j K(x1)_j (x1^2 - 2 x1 U1[x0, j] + U2[x0, j])

where ``U1``/``U2`` are the first and second moments of W over the side
channel (for WCE simply ``W`` and ``W**2``).  For stage ``g2``

    e2(x0, g2) = sum_l K_z(g2)_l Q[x0, l]

with ``Q`` the squared error already averaged over ``m1`` and ``n1``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .controller import AssociationMatrix, RandomizedController, entropy, PROB_FLOOR
from .estimator import EstimatorTable
from .problem import ProblemSpec, Stage
from .quadrature import Grid1D


class NumericalError(RuntimeError):
    """Non-finite quantity encountered during optimization."""


@dataclass(frozen=True)
class CostBreakdown:
    total_D: float
    control_cost: float
    side_power_cost: float
    estimation_error: float
    entropy_H: float
    free_energy_F: float
    rms_g2: float
    T: float = 0.0

    @property
    def cost(self) -> float:
        """Cost without the side-channel power term (the constrained-problem cost)."""
        return self.control_cost + self.estimation_error


def _stage1_tables(c, w: EstimatorTable, p: ProblemSpec, src: Grid1D, backend=None):
    """Per-source tables [1, U1, U2] over the y grid, shape (3, N, Ny)."""
    N = src.points.size
    W = w.values
    if not p.is_side_channel:
        base = np.stack([np.ones_like(W), W, W * W])
        return np.broadcast_to(base[:, None, :], (3, N, W.size))
    x0 = src.points
    Z0 = kernels.gauss_mix(c.g2(x0), c.assoc2.probs, w.z_grid, p.sigma_n2, backend)[0]
    U1 = Z0 @ W.T
    U2 = Z0 @ (W * W).T
    return np.stack([np.ones_like(U1), U1, U2])


def _stage1_terms(x1, tables, w: EstimatorTable, moment=False, backend=None):
    """Estimation error e1 and its derivative in x1 for each (model, point)."""
    E0, E1 = kernels.gauss_expect(x1, tables, w.y_grid, 1.0, moment, backend)
    e = x1 * x1 - 2.0 * x1 * E0[1] + E0[2]
    if not moment:
        return e, None
    mu = E1[0]
    cov = x1 * x1 * mu - 2.0 * x1 * E1[1] + E1[2] - mu * e
    return e, cov + 2.0 * x1 - 2.0 * E0[1]


def _stage2_table(c, w: EstimatorTable, p: ProblemSpec, src: Grid1D, backend=None):
    """Q[x0, l]: squared error at side-channel node l, averaged over m1 and n1."""
    x0 = src.points
    x1 = x0[None, :] + c.g1(x0)
    p1 = c.assoc1.probs
    Y = kernels.gauss_mix(x1, np.stack([p1, p1 * x1]), w.y_grid, 1.0, backend)
    W = w.values
    S2 = np.sum(p1 * x1 * x1, axis=0)
    return S2[:, None] - 2.0 * (Y[1] @ W) + Y[0] @ (W * W)


def _stage2_terms(g2, Q, w: EstimatorTable, sigma, moment=False, backend=None):
    tables = np.stack([np.ones_like(Q), Q])
    E0, E1 = kernels.gauss_expect(g2, tables, w.z_grid, sigma, moment, backend)
    e = E0[1]
    if not moment:
        return e, None
    return e, (E1[1] - E1[0] * e) / (sigma * sigma)


def _check(c: RandomizedController, w: EstimatorTable, p: ProblemSpec, src: Grid1D):
    if c.n_points != src.points.size:
        raise ValueError("controller and source grid sizes differ")
    if p.is_side_channel:
        if not c.has_side_channel:
            raise ValueError("side-channel problem needs a controller with a g2 stage")
        if w.z_grid is None:
            raise ValueError("side-channel problem needs a two-dimensional estimator")


def _breakdown(c, p, src, e1, T):
    x0, wt = src.points, src.weights
    g1 = c.g1(x0)
    p1 = c.assoc1.probs
    control = p.k1 ** 2 * float(np.sum(wt * np.sum(p1 * g1 * g1, axis=0)))
    est = float(np.sum(wt * np.sum(p1 * e1, axis=0)))
    side, rms = 0.0, 0.0
    if p.is_side_channel:
        g2 = c.g2(x0)
        pw = float(np.sum(wt * np.sum(c.assoc2.probs * g2 * g2, axis=0)))
        side = p.k2 ** 2 * pw
        rms = float(np.sqrt(pw))
    H = entropy(c, src)
    D = control + side + est
    return CostBreakdown(D, control, side, est, H, D - T * H, rms, T)


def expected_cost(
    c: RandomizedController,
    w: EstimatorTable,
    p: ProblemSpec,
    src: Grid1D,
    T: float = 0.0,
    backend=None,
) -> CostBreakdown:
    """Expected cost, entropy and free energy of ``c`` with second controller ``w``."""
    return _evaluate(c, w, p, src, T, backend)[0]


def _evaluate(c, w, p, src, T=0.0, backend=None):
    """Breakdown plus the stage-1 partial cost table (reused by the annealer)."""
    _check(c, w, p, src)
    x0 = src.points
    x1 = x0[None, :] + c.g1(x0)
    e1, _ = _stage1_terms(x1, _stage1_tables(c, w, p, src, backend), w, False, backend)
    bd = _breakdown(c, p, src, e1, T)
    g1 = c.g1(x0)
    return bd, p.k1 ** 2 * g1 * g1 + e1


def partial_costs(
    c: RandomizedController,
    w: EstimatorTable,
    p: ProblemSpec,
    src: Grid1D,
    stage: Stage,
    backend=None,
) -> np.ndarray:
    """Cost of associating each source point with each model of ``stage``.

    Entry ``[m, x]`` is the model's own control cost plus the estimation
    error averaged over the other stage's current associations.
    """
    stage = Stage(stage)
    _check(c, w, p, src)
    x0 = src.points
    if stage is Stage.G1:
        g1 = c.g1(x0)
        x1 = x0[None, :] + g1
        e1, _ = _stage1_terms(x1, _stage1_tables(c, w, p, src, backend), w, False, backend)
        return p.k1 ** 2 * g1 * g1 + e1
    if not p.is_side_channel:
        raise ValueError("stage g2 exists only in the side-channel variant")
    g2 = c.g2(x0)
    e2, _ = _stage2_terms(g2, _stage2_table(c, w, p, src, backend), w, p.sigma_n2, False, backend)
    return p.k2 ** 2 * g2 * g2 + e2


def gibbs_update(costs, T: float) -> AssociationMatrix:
    """Column-wise Boltzmann distribution ``p(m|x) ∝ exp(-cost[m, x] / T)``."""
    if not T > 0:
        raise ValueError(f"temperature must be positive, got {T}")
    costs = np.asarray(costs, dtype=float)
    if not np.all(np.isfinite(costs)):
        raise ValueError("Gibbs update needs finite costs")
    z = -(costs - costs.min(axis=0, keepdims=True)) / T
    q = np.exp(z)
    q /= q.sum(axis=0, keepdims=True)
    q = np.where(q < PROB_FLOOR, 0.0, q)
    q /= q.sum(axis=0, keepdims=True)
    return AssociationMatrix(q)


@dataclass
class DescentParams:
    """Backtracking policy for the local-model gradient steps.

    Steps are taken in the metric of each model's region (a 2x2
    least-squares preconditioner), with a per-model step length that grows
    after every accepted step and halves on rejection.
    """

    initial_step: float = 0.5
    backtrack: float = 0.5
    max_halvings: int = 30
    grow: float = 2.0
    max_step: float = 1e4
    iterations: int = 1


@dataclass
class DescentInfo:
    steps: list = field(default_factory=list)
    accepted: int = 0
    rejected: int = 0


def _stage_setup(c, w, p, src, stage, backend):
    """Return (bank, probs, weight, objective-fn) for one stage at fixed others."""
    x0, wt = src.points, src.weights
    if stage is Stage.G1:
        bank, probs, k = c.bank1, c.assoc1.probs, p.k1
        tables = _stage1_tables(c, w, p, src, backend)

        def terms(a, b, rows, moment):
            g = a[:, None] * x0[None, :] + b[:, None]
            x1 = x0[None, :] + g
            e, de = _stage1_terms(x1, tables, w, moment, backend)
            return g, e, de
    else:
        bank, probs, k = c.bank2, c.assoc2.probs, p.k2
        Q = _stage2_table(c, w, p, src, backend)

        def terms(a, b, rows, moment):
            g = a[:, None] * x0[None, :] + b[:, None]
            e, de = _stage2_terms(g, Q, w, p.sigma_n2, moment, backend)
            return g, e, de

    def objective(a, b, rows, moment=False):
        g, e, de = terms(a, b, rows, moment)
        wp = wt[None, :] * probs[rows]
        f = np.sum(wp * (k * k * g * g + e), axis=1)
        if not moment:
            return f, None
        dh = wp * (2.0 * k * k * g + de)
        return f, np.stack([dh @ x0, dh.sum(axis=1)], axis=1)

    return bank, probs, objective


def stage_gradient(c, w, p, src, stage, backend=None):
    """Analytic dF/d(a_m, b_m) for one stage, shape (M, 2), estimator held fixed."""
    stage = Stage(stage)
    _check(c, w, p, src)
    bank, _, objective = _stage_setup(c, w, p, src, stage, backend)
    rows = np.arange(len(bank))
    _, grad = objective(bank.slopes, bank.intercepts, rows, True)
    return grad


def descend_models(
    c: RandomizedController,
    w: EstimatorTable,
    p: ProblemSpec,
    src: Grid1D,
    T: float = 0.0,
    params: Optional[DescentParams] = None,
    steps: Optional[list] = None,
    backend=None,
):
    """Backtracking gradient steps on every local model, stage by stage.

    Associations and the estimator stay fixed, so F decomposes into
    independent per-model objectives and each model's step is accepted only
    if its own objective does not increase.  ``steps`` carries per-model step
    lengths between calls.  Returns ``(controller, DescentInfo)``.
    """
    params = params or DescentParams()
    _check(c, w, p, src)
    stages = [Stage.G1, Stage.G2] if p.is_side_channel else [Stage.G1]
    info = DescentInfo()
    x0, wt = src.points, src.weights
    for si, stage in enumerate(stages):
        bank, probs, objective = _stage_setup(c, w, p, src, stage, backend)
        M = len(bank)
        a = bank.slopes.copy()
        b = bank.intercepts.copy()
        if steps is not None and si < len(steps) and steps[si] is not None and len(steps[si]) == M:
            s = np.array(steps[si], dtype=float)
        else:
            s = np.full(M, params.initial_step)
        wp = wt[None, :] * probs
        m0 = wp.sum(axis=1)
        m1 = wp @ x0
        m2 = wp @ (x0 * x0)
        live = np.flatnonzero(m0 > 0)
        for _ in range(params.iterations):
            if live.size == 0:
                break
            f, grad = objective(a[live], b[live], live, True)
            if not np.all(np.isfinite(grad)):
                bad = live[np.flatnonzero(~np.all(np.isfinite(grad), axis=1))[0]]
                raise NumericalError(f"non-finite gradient for {stage.value} model {bad}")
            # Newton-like direction in the metric of the model's region
            ridge = 1e-12 * (m2[live] + m0[live]) + 1e-300
            P11, P12, P22 = m2[live] + ridge, m1[live], m0[live] + ridge
            det = P11 * P22 - P12 * P12
            det = np.where(det > 0, det, np.inf)  # underflowed masses do not move
            da = -(P22 * grad[:, 0] - P12 * grad[:, 1]) / det
            db = -(-P12 * grad[:, 0] + P11 * grad[:, 1]) / det
            moving = np.flatnonzero((da != 0) | (db != 0))
            pending = moving
            for _h in range(params.max_halvings + 1):
                if pending.size == 0:
                    break
                idx = live[pending]
                ta = a[idx] + s[idx] * da[pending]
                tb = b[idx] + s[idx] * db[pending]
                ft, _ = objective(ta, tb, idx, False)
                ok = np.isfinite(ft) & (ft <= f[pending])
                acc = pending[ok]
                a[live[acc]] = ta[ok]
                b[live[acc]] = tb[ok]
                s[live[acc]] = np.minimum(s[live[acc]] * params.grow, params.max_step)
                info.accepted += int(acc.size)
                pending = pending[~ok]
                s[live[pending]] *= params.backtrack
                info.rejected += int(pending.size)
            if pending.size:
                s[live[pending]] = params.initial_step
        new_bank = bank.with_params(a, b)
        c = c.replace(bank1=new_bank) if stage is Stage.G1 else c.replace(bank2=new_bank)
        info.steps.append(s)
    return c, info
