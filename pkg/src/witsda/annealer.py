"""Deterministic annealing of the randomized controller.

At each temperature every local model is duplicated with a small intercept
offset, then the free energy is minimized by coordinate descent: Gibbs
update of each stage's associations, gradient steps on the local models,
and a rebuild of the conditional-mean estimator.  Duplicates that stay
together are merged before cooling.  Below ``T_min`` the associations are
quenched to hard assignments and refined at zero temperature.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np

from .baselines import affine_cost_at_bsnr, best_affine
from .controller import (
    DEFAULT_M_MAX,
    RandomizedController,
    duplicate_and_perturb,
    effective_model_count,
    is_symmetric_grid,
    merge_models,
    mirror_pairs,
    quench_assoc,
    single_model_controller,
    symmetric_duplicate,
    symmetrize,
)
from .estimator import EstimatorTable, GridConfig, build_estimator, observation_grids
from .free_energy import (
    CostBreakdown,
    DescentParams,
    NumericalError,
    _evaluate,
    descend_models,
    gibbs_update,
    partial_costs,
)
from .problem import ProblemSpec, Stage, achieved_bsnr

log = logging.getLogger(__name__)


@dataclass
class AnnealConfig:
    T0: Union[float, str] = "auto"
    cool_factor: float = 0.92
    T_min: Optional[float] = None  # default 1e-4 * T0
    inner_tol: float = 1e-6
    inner_max_iters: int = 200
    perturb_eps: Optional[float] = None  # default 1e-3 * sigma_x0
    slope_eps: float = 1.0
    merge_tol: Optional[float] = None  # default 0.2 * perturb_eps
    symmetric: bool = True
    rng_seed: int = 0
    m_max1: int = DEFAULT_M_MAX
    m_max2: int = DEFAULT_M_MAX
    final_max_passes: int = 100
    descent: DescentParams = field(default_factory=DescentParams)

    def __post_init__(self):
        if not 0 < self.cool_factor < 1:
            raise ValueError("cool_factor must lie in (0, 1)")
        if self.T0 != "auto" and not float(self.T0) > 0:
            raise ValueError("T0 must be positive or 'auto'")
        if self.T0 != "auto" and self.T_min is not None and not self.T_min < float(self.T0):
            raise ValueError("T_min must be below T0")
        if self.inner_tol <= 0 or self.inner_max_iters < 1:
            raise ValueError("inner_tol must be positive and inner_max_iters at least 1")


@dataclass(frozen=True)
class AnnealState:
    """Snapshot at the end of one temperature."""

    T: float
    breakdown: CostBreakdown
    effective_models: tuple
    n_models: tuple
    sweep_count: int
    sweep_F: tuple
    transition_log: tuple
    merged: int = 0
    sweep_H: tuple = ()
    active_models: tuple = ()  # models per stage during the sweeps, before merging


@dataclass
class AnnealResult:
    controller: RandomizedController
    estimator: EstimatorTable
    states: list
    final: CostBreakdown
    src: object
    bsnr: Optional[float] = None
    T0: float = 0.0
    merge_log: list = field(default_factory=list)

    def __iter__(self):
        return iter((self.controller, self.estimator, self.states))


def _affine_start(p: ProblemSpec, grids: GridConfig, src, descent: DescentParams, m_max=(DEFAULT_M_MAX,) * 2):
    """Single-model controller at the affine optimum, polished on the grid."""
    mapping, _ = best_affine(p)
    s1 = mapping.params["slope1"]
    s2 = mapping.params["slope2"] if p.is_side_channel else None
    c = single_model_controller(s1, 0.0, len(src), s2, 0.0)
    c = _with_m_max(c, m_max)
    steps = None
    prev = math.inf
    w = None
    for _ in range(200):
        y_grid, z_grid = observation_grids(c, p, src, grids.n_y, grids.n_z)
        w = build_estimator(c, p, src, y_grid, z_grid)
        bd, _ = _evaluate(c, w, p, src)
        if abs(prev - bd.total_D) <= 1e-12 * abs(bd.total_D):
            break
        prev = bd.total_D
        c, info = descend_models(c, w, p, src, 0.0, replace(descent, iterations=5), steps)
        steps = info.steps
    return c, w, bd


def _with_m_max(c, m_max):
    b1 = replace(c.bank1, m_max=m_max[0])
    b2 = None if c.bank2 is None else replace(c.bank2, m_max=m_max[1])
    return c.replace(bank1=b1, bank2=b2)


def auto_T0(p: ProblemSpec, grids: Optional[GridConfig] = None) -> float:
    """Ten times the single-affine cost on the grid."""
    grids = grids or GridConfig()
    src = grids.source_grid(p)
    _, _, bd = _affine_start(p, grids, src, DescentParams())
    return 10.0 * bd.total_D


def _effective(c, src, tol):
    out = []
    for bank, assoc in zip(c.banks(), c.assocs()):
        out.append(effective_model_count(bank, tol, assoc.probs @ src.weights))
    return tuple(out)


def _sweep(c, w, p, src, T, cost1, cfg, steps, symmetric=False):
    """One coordinate-descent sweep at fixed T and fixed observation grids."""
    c = c.replace(assoc1=gibbs_update(cost1, T))
    if p.is_side_channel:
        c = c.replace(assoc2=gibbs_update(partial_costs(c, w, p, src, Stage.G2), T))
    c, info = descend_models(c, w, p, src, T, cfg.descent, steps)
    if symmetric:
        # rounding noise would otherwise grow along symmetry-breaking directions
        c = _resymmetrize(c)
    w = build_estimator(c, p, src, w.y_grid, w.z_grid)
    bd, cost1 = _evaluate(c, w, p, src, T)
    return c, w, bd, cost1, info.steps


def _duplicate(c, steps, cfg, eps, k, symmetric):
    """Duplicate every stage, carrying per-model step lengths along."""
    new = {}
    new_steps = []
    for si, (bank, assoc) in enumerate(zip(c.banks(), c.assocs())):
        seed = cfg.rng_seed * 1_000_003 + 2 * k + si
        pi = mirror_pairs(bank, assoc) if symmetric else None
        if pi is not None:
            nb, na, parent, _ = symmetric_duplicate(bank, assoc, pi, eps, seed, cfg.slope_eps)
        else:
            nb, na, dup = duplicate_and_perturb(bank, assoc, eps, seed, cfg.slope_eps)
            parent = np.tile(np.arange(len(bank)), 2 if dup else 1)
        key = "1" if si == 0 else "2"
        new["bank" + key], new["assoc" + key] = nb, na
        s = None if steps is None else steps[si]
        new_steps.append(None if s is None else np.asarray(s)[parent])
    return c.replace(**new), new_steps


def _resymmetrize(c):
    """Remove rounding drift away from mirror symmetry."""
    new = {}
    for si, (bank, assoc) in enumerate(zip(c.banks(), c.assocs())):
        pi = mirror_pairs(bank, assoc, tol=1e-6)
        if pi is None:
            log.warning("stage %d is no longer mirror-symmetric", si + 1)
        else:
            key = "1" if si == 0 else "2"
            new["bank" + key], new["assoc" + key] = symmetrize(bank, assoc, pi)
    return c.replace(**new) if new else c


def _finite(bd: CostBreakdown) -> bool:
    return all(math.isfinite(v) for v in (bd.total_D, bd.free_energy_F, bd.entropy_H))


def anneal(p: ProblemSpec, grids: Optional[GridConfig] = None, cfg: Optional[AnnealConfig] = None, progress=None) -> AnnealResult:
    """Run the full annealing schedule and return the quenched controller."""
    grids = grids or GridConfig()
    cfg = cfg or AnnealConfig()
    src = grids.source_grid(p)
    c, w, bd = _affine_start(p, grids, src, cfg.descent, (cfg.m_max1, cfg.m_max2))
    T0 = 10.0 * bd.total_D if cfg.T0 == "auto" else float(cfg.T0)
    T_min = cfg.T_min if cfg.T_min is not None else 1e-4 * T0
    eps = cfg.perturb_eps if cfg.perturb_eps is not None else 1e-3 * p.sigma_x0
    merge_tol = cfg.merge_tol if cfg.merge_tol is not None else 0.2 * eps
    symmetric = cfg.symmetric and is_symmetric_grid(src) and p.source.mean == 0

    states: list[AnnealState] = []
    transitions: list = []
    merge_log: list = []
    steps = None
    prev_eff = _effective(c, src, merge_tol)
    T = T0
    k = 0
    while T >= T_min:
        if k > 0:  # the first temperature settles the single affine model
            c, steps = _duplicate(c, steps, cfg, eps, k, symmetric)
        y_grid, z_grid = observation_grids(c, p, src, grids.n_y, grids.n_z)
        w = build_estimator(c, p, src, y_grid, z_grid)
        bd, cost1 = _evaluate(c, w, p, src, T)
        sweep_F = [bd.free_energy_F]
        sweep_H = [bd.entropy_H]
        active = tuple(len(b) for b in c.banks())
        it = 0
        for it in range(1, cfg.inner_max_iters + 1):
            last = (c, w, bd)
            c, w, bd, cost1, steps = _sweep(c, w, p, src, T, cost1, cfg, steps, symmetric)
            if not _finite(bd):
                c, w, bd = last
                raise NumericalError(f"non-finite free energy at T={T:.6g}, sweep {it}")
            sweep_F.append(bd.free_energy_F)
            sweep_H.append(bd.entropy_H)
            if abs(sweep_F[-1] - sweep_F[-2]) <= cfg.inner_tol * abs(sweep_F[-1]):
                break
        # merge duplicates that stayed together and drop dead models
        merged = 0
        new = {}
        for si, (bank, assoc) in enumerate(zip(c.banks(), c.assocs())):
            nb, na, kept = merge_models(bank, assoc, src, merge_tol, min_mass=1e-14)
            merged += len(bank) - len(kept)
            key = "1" if si == 0 else "2"
            new["bank" + key], new["assoc" + key] = nb, na
            if steps is not None and steps[si] is not None:
                steps[si] = np.asarray(steps[si])[kept]
        if merged:
            c = c.replace(**new)
            merge_log.append((T, merged))
        if symmetric:
            c = _resymmetrize(c)
        if merged or symmetric:
            bd, cost1 = _evaluate(c, w, p, src, T)
        eff = _effective(c, src, merge_tol)
        if eff != prev_eff:
            transitions.append((T, prev_eff, eff))
            log.info("T=%.5g: effective models %s -> %s", T, prev_eff, eff)
        prev_eff = eff
        states.append(
            AnnealState(
                T=T,
                breakdown=bd,
                effective_models=eff,
                n_models=tuple(len(b) for b in c.banks()),
                sweep_count=it,
                sweep_F=tuple(sweep_F),
                transition_log=tuple(transitions),
                merged=merged,
                sweep_H=tuple(sweep_H),
                active_models=active,
            )
        )
        if progress is not None:
            progress(states[-1])
        k += 1
        T = T0 * cfg.cool_factor ** k
    c, w, bd = _zero_temperature(c, p, src, grids, cfg, steps)
    bsnr = achieved_bsnr(p, bd.rms_g2) if p.is_side_channel else None
    return AnnealResult(c, w, states, bd, src, bsnr, T0, merge_log)


def _zero_temperature(c, p, src, grids, cfg, steps):
    """Quench, then alternate hard reassignment, model descent and estimator."""
    prev = math.inf
    for _ in range(cfg.final_max_passes):
        y_grid, z_grid = observation_grids(c, p, src, grids.n_y, grids.n_z)
        w = build_estimator(c, p, src, y_grid, z_grid)
        c = c.replace(assoc1=quench_assoc(partial_costs(c, w, p, src, Stage.G1)))
        if p.is_side_channel:
            c = c.replace(assoc2=quench_assoc(partial_costs(c, w, p, src, Stage.G2)))
        c, info = descend_models(c, w, p, src, 0.0, cfg.descent, steps)
        steps = info.steps
        y_grid, z_grid = observation_grids(c, p, src, grids.n_y, grids.n_z)
        w = build_estimator(c, p, src, y_grid, z_grid)
        bd, _ = _evaluate(c, w, p, src, 0.0)
        if prev - bd.total_D <= cfg.inner_tol * abs(bd.total_D):
            break
        prev = bd.total_D
    return c, w, bd


def sweep_k2(p: ProblemSpec, grids: Optional[GridConfig], cfg: Optional[AnnealConfig], k2_list, progress=None):
    """One annealing run per k2; rows sorted by achieved b_SNR.

    Each row is a dict with k2, bsnr, cost (side-channel power excluded),
    total_D, affine_cost at the achieved b_SNR, and an ``error`` entry when
    the run failed.
    """
    if not p.is_side_channel:
        raise ValueError("k2 sweeps need the side-channel variant")
    rows = []
    for k2 in k2_list:
        pk = p.with_k2(float(k2))
        try:
            res = anneal(pk, grids, cfg)
            row = {
                "k2": float(k2),
                "bsnr": res.bsnr,
                "cost": res.final.cost,
                "total_D": res.final.total_D,
                "affine_cost": affine_cost_at_bsnr(pk, res.bsnr),
                "result": res,
                "error": None,
            }
        except (NumericalError, ValueError, FloatingPointError) as exc:
            row = {"k2": float(k2), "bsnr": math.nan, "cost": math.nan, "total_D": math.nan,
                   "affine_cost": math.nan, "result": None, "error": str(exc)}
        if progress is not None:
            progress(row)
        rows.append(row)
    rows.sort(key=lambda r: (math.isnan(r["bsnr"]), r["bsnr"]))
    good = [r for r in rows if r["error"] is None]
    for prev, cur in zip(good, good[1:]):
        cur["monotone"] = cur["cost"] <= prev["cost"] * 1.05
    return rows
