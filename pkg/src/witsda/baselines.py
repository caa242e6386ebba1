"""Reference mappings and independent cost evaluation.

* closed-form affine optimum (linear controllers with linear MMSE estimator),
* Witsenhausen's one-step sign mapping,
* uniform staircases with a scaled side-channel copy,
* quadrature scoring of any deterministic mapping,
* a plain Monte-Carlo cost oracle that shares no code with the quadrature.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import optimize

from .controller import RandomizedController, TabulatedController
from .estimator import EstimatorTable, GridConfig, build_estimator, estimate, observation_grids
from .free_energy import CostBreakdown, expected_cost
from .problem import ProblemSpec, Variant


class MappingKind(str, enum.Enum):
    AFFINE = "affine"
    SIGN_STEP = "sign-step"
    STAIRCASE = "staircase"
    SAMPLED = "sampled"


@dataclass(frozen=True, eq=False)
class DeterministicMapping:
    """A first controller x0 -> (g1, g2) defined on the whole real line.

    Parameters by kind:

    ``AFFINE``     slope1, slope2 (intercepts are zero)
    ``SIGN_STEP``  magnitude: x1 = magnitude * sgn(x0), sgn(0) = +1
    ``STAIRCASE``  width, step_slope, scale: x1 is the nearest multiple of
                   ``width`` (ties toward the lower one) plus ``step_slope``
                   times the offset from it; g2 = scale * x1
    ``SAMPLED``    x0, g1, g2 tables, linearly interpolated and clamped
    """

    kind: MappingKind
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "kind", MappingKind(self.kind))
        if self.kind is MappingKind.SAMPLED:
            x = np.asarray(self.params["x0"], dtype=float)
            if x.ndim != 1 or x.size < 2 or np.any(np.diff(x) <= 0):
                raise ValueError("sampled mapping needs strictly increasing x0")
            for key in ("g1", "g2"):
                v = self.params.get(key)
                if v is not None and (np.shape(v) != x.shape or not np.all(np.isfinite(v))):
                    raise ValueError(f"sampled {key} must be finite and match x0")

    def g1(self, x0):
        x0 = np.asarray(x0, dtype=float)
        k, prm = self.kind, self.params
        if k is MappingKind.AFFINE:
            return prm.get("slope1", 0.0) * x0
        if k is MappingKind.SIGN_STEP:
            return np.where(x0 >= 0, prm["magnitude"], -prm["magnitude"]) - x0
        if k is MappingKind.STAIRCASE:
            return _stair_x1(x0, prm["width"], prm.get("step_slope", 0.0)) - x0
        return np.interp(x0, prm["x0"], prm["g1"])

    def g2(self, x0):
        x0 = np.asarray(x0, dtype=float)
        k, prm = self.kind, self.params
        if k is MappingKind.AFFINE:
            return prm.get("slope2", 0.0) * x0
        if k is MappingKind.STAIRCASE:
            return prm.get("scale", 0.0) * _stair_x1(x0, prm["width"], prm.get("step_slope", 0.0))
        if k is MappingKind.SAMPLED and prm.get("g2") is not None:
            return np.interp(x0, prm["x0"], prm["g2"])
        return np.zeros_like(x0)


def _stair_x1(x0, width, step_slope=0.0):
    level = width * np.ceil(x0 / width - 0.5)
    return level + step_slope * (x0 - level)


def affine_cost(p: ProblemSpec, slope1: float, slope2: float = 0.0, with_side_power: bool = True) -> float:
    """Exact cost of g1 = slope1 x0, g2 = slope2 x0 with the linear MMSE estimator."""
    s2 = p.sigma_x0 ** 2
    c = 1.0 + slope1
    info = 1.0 / s2 + c * c
    if p.is_side_channel:
        info += slope2 ** 2 / p.sigma_n2 ** 2
    cost = p.k1 ** 2 * slope1 ** 2 * s2 + c * c / info
    if p.is_side_channel and with_side_power:
        cost += p.k2 ** 2 * slope2 ** 2 * s2
    return cost


def _golden_min(f, lo, hi, n_scan=401):
    """Scan [lo, hi], then golden-section search around the best scan point."""
    xs = np.linspace(lo, hi, n_scan)
    fs = np.array([f(x) for x in xs])
    i = int(np.argmin(fs))
    if 0 < i < n_scan - 1:
        res = optimize.minimize_scalar(f, bracket=(xs[i - 1], xs[i], xs[i + 1]), method="golden",
                                       options={"xtol": 1e-10})
    else:
        res = optimize.minimize_scalar(f, bounds=(xs[max(i - 1, 0)], xs[min(i + 1, n_scan - 1)]),
                                       method="bounded", options={"xatol": 1e-12})
    return float(res.x), float(res.fun)


def best_affine(p: ProblemSpec):
    """Optimal linear first controller; returns ``(mapping, cost)``.

    WCE: golden-section search over the slope.  Side channel: scan of the
    two slopes on a grid, refined by Nelder-Mead.
    """
    if not p.is_side_channel:
        lam, cost = _golden_min(lambda s: affine_cost(p, s), -1.5, 0.5)
        return DeterministicMapping(MappingKind.AFFINE, {"slope1": lam, "slope2": 0.0}), cost
    s1 = np.linspace(-1.2, 0.2, 141)
    s2max = 3.0 * p.sigma_n2 / p.sigma_x0 * max(1.0, 1.0 / max(p.k2, 1e-3))
    s2 = np.linspace(0.0, min(s2max, 50.0), 201)
    grid = np.array([[affine_cost(p, a, b) for b in s2] for a in s1])
    i, j = np.unravel_index(np.argmin(grid), grid.shape)
    res = optimize.minimize(lambda v: affine_cost(p, v[0], v[1]), [s1[i], s2[j]],
                            method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 4000})
    lam1, lam2 = float(res.x[0]), abs(float(res.x[1]))
    return DeterministicMapping(MappingKind.AFFINE, {"slope1": lam1, "slope2": lam2}), float(res.fun)


def affine_cost_at_bsnr(p: ProblemSpec, bsnr: float) -> float:
    """Best affine cost (side-channel power excluded) under rms(g2)/sigma_n2 = bsnr."""
    slope2 = bsnr * p.sigma_n2 / p.sigma_x0
    _, cost = _golden_min(lambda s: affine_cost(p, s, slope2, with_side_power=False), -1.5, 0.5)
    return cost


def witsenhausen_one_step(p: ProblemSpec) -> DeterministicMapping:
    """x1 = sigma_x0 * sgn(x0)."""
    if p.variant is not Variant.WCE:
        raise ValueError("the one-step mapping is defined for the WCE variant")
    return DeterministicMapping(MappingKind.SIGN_STEP, {"magnitude": p.sigma_x0})


def signalled_staircase(p: ProblemSpec, step_width: float, scale: float, step_slope: float = 0.0) -> DeterministicMapping:
    """Uniform staircase x1 with the side channel sending ``scale * x1``."""
    if not p.is_side_channel:
        raise ValueError("the staircase with side channel needs the side-channel variant")
    if not step_width > 0:
        raise ValueError("step width must be positive")
    return DeterministicMapping(
        MappingKind.STAIRCASE, {"width": step_width, "scale": scale, "step_slope": step_slope}
    )


def staircase_scale_for_bsnr(p: ProblemSpec, step_width: float, bsnr: float, n_points: int = 20001) -> float:
    """Scale that makes rms(g2)/sigma_n2 equal ``bsnr`` for the given staircase."""
    x = np.linspace(-5 * p.sigma_x0, 5 * p.sigma_x0, n_points)
    w = np.exp(-0.5 * (x / p.sigma_x0) ** 2)
    w /= w.sum()
    rms = np.sqrt(np.sum(w * _stair_x1(x, step_width) ** 2))
    return 0.0 if rms == 0 else bsnr * p.sigma_n2 / rms


def tabulate(m, p: ProblemSpec, src) -> TabulatedController:
    """Sample a mapping (or a randomized controller's hard mapping) on the source grid."""
    x0 = src.points
    if isinstance(m, DeterministicMapping):
        g2 = m.g2(x0) if p.is_side_channel else None
        return TabulatedController(m.g1(x0), g2)
    g1, g2 = m.hard_mapping(x0)
    return TabulatedController(g1, g2 if p.is_side_channel else None)


def evaluate_mapping(m, p: ProblemSpec, grids: Optional[GridConfig] = None, return_estimator: bool = False):
    """Quadrature cost of a deterministic mapping with its matched estimator."""
    grids = grids or GridConfig()
    src = grids.source_grid(p)
    c = tabulate(m, p, src)
    y_grid, z_grid = observation_grids(c, p, src, grids.n_y, grids.n_z)
    w = build_estimator(c, p, src, y_grid, z_grid)
    bd = expected_cost(c, w, p, src)
    return (bd, w) if return_estimator else bd


def best_staircase(p: ProblemSpec, bsnr: float, grids: Optional[GridConfig] = None):
    """Staircase whose width minimizes the cost at a fixed side-channel b_SNR.

    Returns ``(mapping, breakdown)``.
    """
    grids = grids or GridConfig()

    def score(width):
        m = signalled_staircase(p, width, staircase_scale_for_bsnr(p, width, bsnr))
        return evaluate_mapping(m, p, grids).cost

    ws = np.linspace(0.5, 2.5 * p.sigma_x0, 25)
    costs = [score(wd) for wd in ws]
    i = int(np.argmin(costs))
    lo, hi = ws[max(i - 1, 0)], ws[min(i + 1, len(ws) - 1)]
    res = optimize.minimize_scalar(score, bounds=(lo, hi), method="bounded", options={"xatol": 1e-3})
    width = float(res.x) if res.fun <= costs[i] else float(ws[i])
    m = signalled_staircase(p, width, staircase_scale_for_bsnr(p, width, bsnr))
    return m, evaluate_mapping(m, p, grids)


class _ControllerMap:
    """Continuous extension of a controller: nearest grid point picks the model."""

    def __init__(self, c, src):
        self.src = src
        x0 = src.points
        self.hard = c.hard_mapping(x0)
        if isinstance(c, RandomizedController):
            self.i1 = np.argmax(c.assoc1.probs, axis=0)
            self.bank1 = c.bank1
            self.i2 = None if c.assoc2 is None else np.argmax(c.assoc2.probs, axis=0)
            self.bank2 = c.bank2
        else:
            self.bank1 = None

    def _nearest(self, x):
        pos = np.rint((x - self.src.start) / self.src.step).astype(int)
        return np.clip(pos, 0, len(self.src) - 1)

    def g1(self, x):
        k = self._nearest(x)
        if self.bank1 is None:
            return self.hard[0][k]
        m = self.i1[k]
        return self.bank1.slopes[m] * x + self.bank1.intercepts[m]

    def g2(self, x):
        k = self._nearest(x)
        if self.bank1 is None:
            return np.zeros_like(x) if self.hard[1] is None else self.hard[1][k]
        if self.i2 is None:
            return np.zeros_like(x)
        m = self.i2[k]
        return self.bank2.slopes[m] * x + self.bank2.intercepts[m]


def mc_cost(
    m,
    w: EstimatorTable,
    p: ProblemSpec,
    n_samples: int = 1_000_000,
    seed: int = 0,
    src=None,
    block: int = 100_000,
    include_side_power: bool = True,
):
    """Monte-Carlo estimate of the expected cost; returns ``(mean, std_error)``.

    ``m`` is a :class:`DeterministicMapping` or a controller on ``src``.
    The second controller is ``w`` read by (bi)linear interpolation.
    """
    if n_samples < 10_000:
        raise ValueError("Monte-Carlo oracle needs at least 1e4 samples")
    mapping = m if isinstance(m, DeterministicMapping) else _ControllerMap(m, src)
    children = np.random.SeedSequence(seed).spawn((n_samples + block - 1) // block)
    total, total_sq, count = 0.0, 0.0, 0
    for i, ss in enumerate(children):
        n = min(block, n_samples - i * block)
        rng = np.random.default_rng(ss)
        x0 = rng.normal(p.source.mean, p.sigma_x0, n)
        n1 = rng.normal(0.0, 1.0, n)
        g1 = mapping.g1(x0)
        x1 = x0 + g1
        cost = p.k1 ** 2 * g1 * g1
        if p.is_side_channel:
            n2 = rng.normal(0.0, p.sigma_n2, n)
            g2 = mapping.g2(x0)
            if include_side_power:
                cost = cost + p.k2 ** 2 * g2 * g2
            xhat = estimate(w, x1 + n1, g2 + n2)
        else:
            xhat = estimate(w, x1 + n1)
        cost = cost + (x1 - xhat) ** 2
        total += float(cost.sum())
        total_sq += float(np.dot(cost, cost))
        count += n
    mean = total / count
    var = max(total_sq / count - mean * mean, 0.0)
    return mean, float(np.sqrt(var / count))
