"""Shape diagnostics for tabulated mappings: jumps, steps, symmetry."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_JUMP = 0.5


def find_jumps(x0: np.ndarray, values: np.ndarray, threshold: float = DEFAULT_JUMP) -> np.ndarray:
    """Midpoints between neighbouring samples whose values differ by more than ``threshold``."""
    x0 = np.asarray(x0, dtype=float)
    v = np.asarray(values, dtype=float)
    idx = np.flatnonzero(np.abs(np.diff(v)) > threshold)
    return 0.5 * (x0[idx] + x0[idx + 1])


@dataclass(frozen=True)
class StaircaseShape:
    jumps: np.ndarray
    levels: np.ndarray  # value at each segment's midpoint
    slopes: np.ndarray  # least-squares slope per segment (NaN below 3 samples)
    widths: np.ndarray
    residuals: np.ndarray  # largest deviation from the fitted line per segment

    @property
    def n_steps(self) -> int:
        return int(self.levels.size)


def staircase_shape(x0, values, threshold: float = DEFAULT_JUMP, window: float = np.inf) -> StaircaseShape:
    """Split a sampled mapping at its jumps and fit a line to every segment.

    Only samples with ``|x0| <= window`` are considered.
    """
    x0 = np.asarray(x0, dtype=float)
    v = np.asarray(values, dtype=float)
    keep = np.abs(x0) <= window
    x0, v = x0[keep], v[keep]
    cut = np.flatnonzero(np.abs(np.diff(v)) > threshold) + 1
    levels, slopes, widths, resid = [], [], [], []
    for seg in np.split(np.arange(x0.size), cut):
        xs, vs = x0[seg], v[seg]
        mid = seg[seg.size // 2]
        levels.append(v[mid])
        widths.append(xs[-1] - xs[0])
        if seg.size >= 3:
            coef = np.polyfit(xs, vs, 1)
            slopes.append(coef[0])
            resid.append(np.max(np.abs(np.polyval(coef, xs) - vs)))
        else:
            slopes.append(np.nan)
            resid.append(0.0)
    return StaircaseShape(
        jumps=0.5 * (x0[cut - 1] + x0[cut]),
        levels=np.array(levels),
        slopes=np.array(slopes),
        widths=np.array(widths),
        residuals=np.array(resid),
    )


def oddness_error(x0, values, window: float = np.inf) -> float:
    """Largest ``|f(x) + f(-x)|`` over ``|x| <= window`` (``f(-x)`` interpolated)."""
    x0 = np.asarray(x0, dtype=float)
    v = np.asarray(values, dtype=float)
    keep = np.abs(x0) <= window
    mirrored = np.interp(-x0[keep], x0, v)
    return float(np.max(np.abs(v[keep] + mirrored)))


def jump_mismatch(jumps_a, jumps_b) -> float:
    """Largest distance from a jump in either list to the nearest jump in the other.

    Zero when both lists are empty; infinite when exactly one is.
    """
    a = np.sort(np.asarray(jumps_a, dtype=float))
    b = np.sort(np.asarray(jumps_b, dtype=float))
    if a.size == 0 and b.size == 0:
        return 0.0
    if a.size == 0 or b.size == 0:
        return float("inf")
    d_ab = np.min(np.abs(a[:, None] - b[None, :]), axis=1)
    d_ba = np.min(np.abs(b[:, None] - a[None, :]), axis=1)
    return float(max(d_ab.max(), d_ba.max()))


def unmatched_jumps(jumps_a, jumps_b, tol: float) -> np.ndarray:
    """Jumps in ``jumps_a`` with no jump of ``jumps_b`` within ``tol``."""
    a = np.asarray(jumps_a, dtype=float)
    b = np.asarray(jumps_b, dtype=float)
    if b.size == 0:
        return a
    d = np.min(np.abs(a[:, None] - b[None, :]), axis=1) if a.size else np.zeros(0)
    return a[d > tol]
