"""Second controller: the conditional mean of x1 given the observations.

The table is tabulated on uniform observation grids.  Noise expectations
use the discretized observation channel: a state value ``x1`` reaches grid
node ``y_j`` with probability ``K(x1)_j`` (the row-normalized Gaussian
kernel of :mod:`witsda.kernels`).  With that channel the table below is the
exact minimizer of the discretized squared error, which keeps every
coordinate-descent step of the annealer monotone.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .controller import RandomizedController
from .problem import ProblemSpec
from .quadrature import TRUNCATION, Grid1D, make_source_grid, uniform_grid

EMPTY_CELL = 1e-300
DEFAULT_NY = 401
DEFAULT_NZ = 201


@dataclass(frozen=True)
class GridConfig:
    """Point counts for the source grid and the observation axes."""

    n_source: int = 501
    n_y: int = DEFAULT_NY
    n_z: int = DEFAULT_NZ

    @classmethod
    def fast(cls) -> "GridConfig":
        return cls()

    @classmethod
    def fine(cls) -> "GridConfig":
        return cls(n_source=2001, n_y=1001, n_z=401)

    def source_grid(self, p: ProblemSpec) -> Grid1D:
        return make_source_grid(p.source, self.n_source)


@dataclass(frozen=True, eq=False)
class EstimatorTable:
    """W sampled on the observation grids: ``values[y]`` or ``values[y, z]``."""

    y_grid: Grid1D
    z_grid: Optional[Grid1D]
    values: np.ndarray
    empty_cells: int = 0
    diagnostics: dict = field(default_factory=lambda: {"clamped": 0})

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        expected = (len(self.y_grid),) if self.z_grid is None else (len(self.y_grid), len(self.z_grid))
        if v.shape != expected:
            raise ValueError(f"estimator values have shape {v.shape}, expected {expected}")
        if not np.all(np.isfinite(v)):
            raise ValueError("estimator values must be finite")
        object.__setattr__(self, "values", v)


def _support(values: np.ndarray, probs: np.ndarray) -> float:
    live = probs > 0
    return float(np.max(np.abs(values[live]))) if live.any() else 0.0


def observation_grids(
    c: RandomizedController,
    p: ProblemSpec,
    src: Grid1D,
    n_y: int = DEFAULT_NY,
    n_z: int = DEFAULT_NZ,
):
    """Symmetric observation grids covering every reachable x1 (and g2) value
    plus five noise standard deviations."""
    x0 = src.points
    x1 = x0[None, :] + c.g1(x0)
    ry = _support(x1, c.assoc1.probs) + TRUNCATION * p.obs_noise.std
    y_grid = uniform_grid(-ry, ry, n_y)
    if not p.is_side_channel:
        return y_grid, None
    rz = _support(c.g2(x0), c.assoc2.probs) + TRUNCATION * p.sigma_n2
    return y_grid, uniform_grid(-rz, rz, n_z)


def _check(c: RandomizedController, p: ProblemSpec, z_grid):
    if p.is_side_channel and not c.has_side_channel:
        raise ValueError("side-channel problem needs a controller with a g2 stage")
    if p.is_side_channel and z_grid is None:
        raise ValueError("side-channel problem needs a z grid")


def build_estimator(
    c: RandomizedController,
    p: ProblemSpec,
    src: Grid1D,
    y_grid: Grid1D,
    z_grid: Optional[Grid1D] = None,
    backend=None,
) -> EstimatorTable:
    """Tabulate W(y1[, z]) = E{x1 | y1[, z]} for the randomized controller.

    Cells that no state can reach (posterior mass below 1e-300) take the
    prior mean of x1 and are counted in ``empty_cells``.
    """
    _check(c, p, z_grid)
    x0, w = src.points, src.weights
    x1 = x0[None, :] + c.g1(x0)
    p1 = c.assoc1.probs
    wp1 = w[None, :] * p1
    A = kernels.gauss_mix(x1, np.stack([wp1 * x1, wp1]), y_grid, p.obs_noise.std, backend)
    if p.is_side_channel:
        B = kernels.gauss_mix(c.g2(x0), c.assoc2.probs, z_grid, p.sigma_n2, backend)[0]
        num = A[0].T @ B
        den = A[1].T @ B
    else:
        num = A[0].sum(axis=0)
        den = A[1].sum(axis=0)
    prior = float(np.sum(wp1 * x1))
    ok = den > EMPTY_CELL
    values = np.where(ok, num / np.where(ok, den, 1.0), prior)
    return EstimatorTable(y_grid, z_grid, values, int(np.count_nonzero(~ok)))


def _locate(grid: Grid1D, q: np.ndarray):
    """Left node index and linear weight for queries, clamped to the grid."""
    pos = (q - grid.start) / grid.step
    outside = (pos < 0) | (pos > len(grid) - 1)
    pos = np.clip(pos, 0.0, len(grid) - 1)
    i = np.minimum(np.floor(pos).astype(int), len(grid) - 2)
    return i, pos - i, outside


def estimate(t: EstimatorTable, y1, z=None):
    """Linear (WCE) or bilinear (side channel) interpolation of the table.

    Out-of-range queries are clamped to the boundary and counted in
    ``t.diagnostics['clamped']``.
    """
    scalar = np.ndim(y1) == 0
    y = np.atleast_1d(np.asarray(y1, dtype=float))
    iy, fy, out = _locate(t.y_grid, y)
    V = t.values
    if t.z_grid is None:
        res = (1 - fy) * V[iy] + fy * V[iy + 1]
    else:
        if z is None:
            raise ValueError("side-channel estimator needs a z query")
        zz = np.broadcast_to(np.asarray(z, dtype=float), y.shape)
        iz, fz, outz = _locate(t.z_grid, zz)
        out = out | outz
        res = (
            (1 - fy) * (1 - fz) * V[iy, iz]
            + fy * (1 - fz) * V[iy + 1, iz]
            + (1 - fy) * fz * V[iy, iz + 1]
            + fy * fz * V[iy + 1, iz + 1]
        )
    t.diagnostics["clamped"] += int(np.count_nonzero(out))
    return float(res[0]) if scalar else res
