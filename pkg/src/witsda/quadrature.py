"""Uniform-grid discretization of Gaussian densities.

Every expectation in the package is a finite weighted sum over a uniform
grid.  Source densities are truncated to +/- 5 standard deviations and the
truncated weights are renormalized to a probability measure.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

TRUNCATION = 5.0
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class GaussianSpec:
    """A scalar Gaussian N(mean, std**2)."""

    mean: float
    std: float

    def __post_init__(self):
        if not (self.std > 0.0) or not math.isfinite(self.std):
            raise ValueError(f"Gaussian std must be positive and finite, got {self.std!r}")
        if not math.isfinite(self.mean):
            raise ValueError(f"Gaussian mean must be finite, got {self.mean!r}")


@dataclass(frozen=True, eq=False)
class Grid1D:
    """Uniformly spaced points with per-point weights.

    For a source grid the weights form a probability vector; for an
    observation grid they are plain quadrature weights (the spacing).
    """

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        wts = np.asarray(self.weights, dtype=float)
        if pts.ndim != 1 or pts.shape != wts.shape:
            raise ValueError("points and weights must be 1-D arrays of equal length")
        if pts.size >= 2:
            d = np.diff(pts)
            if np.any(d <= 0):
                raise ValueError("grid points must be strictly increasing")
            h = (pts[-1] - pts[0]) / (pts.size - 1)
            if np.max(np.abs(d - h)) > 1e-9 * max(abs(h), 1.0):
                raise ValueError("grid spacing is not uniform")
        if np.any(wts < 0):
            raise ValueError("grid weights must be non-negative")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", wts)

    def __len__(self) -> int:
        return self.points.size

    @property
    def start(self) -> float:
        return float(self.points[0])

    @property
    def stop(self) -> float:
        return float(self.points[-1])

    @property
    def step(self) -> float:
        if self.points.size < 2:
            return 1.0
        return (self.stop - self.start) / (self.points.size - 1)


def gauss_density(x, g: GaussianSpec):
    """Gaussian density of ``g`` at ``x`` (scalar or array), via the log domain."""
    return np.exp(log_gauss_density(x, g))


def log_gauss_density(x, g: GaussianSpec):
    z = (np.asarray(x, dtype=float) - g.mean) / g.std
    out = -0.5 * z * z - math.log(g.std) - _LOG_SQRT_2PI
    return float(out) if np.ndim(out) == 0 else out


def uniform_grid(lo: float, hi: float, n_points: int) -> Grid1D:
    """Quadrature grid on [lo, hi] with weights equal to the spacing."""
    if n_points < 2:
        raise ValueError("a quadrature grid needs at least 2 points")
    if not hi > lo:
        raise ValueError(f"empty interval [{lo}, {hi}]")
    pts = np.linspace(lo, hi, n_points)
    return Grid1D(pts, np.full(n_points, (hi - lo) / (n_points - 1)))


def make_source_grid(g: GaussianSpec, n_points: int) -> Grid1D:
    """Probability grid for ``g`` on [mean - 5 std, mean + 5 std].

    ``n_points`` must be odd and at least 3 so that the mean is a grid point.
    Weights are density times spacing, renormalized to sum to exactly one.
    """
    n_points = int(n_points)
    if n_points < 3:
        raise ValueError(f"source grid needs at least 3 points, got {n_points}")
    if n_points % 2 == 0:
        raise ValueError(
            f"source grid point count must be odd so the mean is a grid point, got {n_points}"
        )
    half = TRUNCATION * g.std
    pts = np.linspace(g.mean - half, g.mean + half, n_points)
    pts[n_points // 2] = g.mean
    logw = log_gauss_density(pts, g)
    w = np.exp(logw - logw.max())
    w /= w.sum()
    return Grid1D(pts, w)


def expect_over_noise(
    f: Union[Callable[[np.ndarray], np.ndarray], np.ndarray],
    noise: GaussianSpec,
    n_points: int,
) -> float:
    """Quadrature estimate of E{f(noise)} on the truncated noise grid.

    ``f`` is either a vectorized callable or an array already sampled on
    ``make_source_grid(noise, n_points).points``.
    """
    if n_points < 3:
        raise ValueError(f"noise quadrature needs at least 3 points, got {n_points}")
    grid = make_source_grid(noise, n_points)
    if callable(f):
        vals = np.broadcast_to(np.asarray(f(grid.points), dtype=float), grid.points.shape)
    else:
        vals = np.asarray(f, dtype=float)
        if vals.shape != grid.points.shape:
            raise ValueError(f"sampled table has shape {vals.shape}, expected {grid.points.shape}")
    return float(np.dot(grid.weights, vals))
