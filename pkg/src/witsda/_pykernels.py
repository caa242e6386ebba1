"""Pure-numpy Gaussian kernel contractions (fallback backend).

Both backends work with the row-normalized, windowed Gaussian kernel

    K(c)_j = exp(-(g_j - c)^2 / (2 sigma^2)) / sum_{j' in window} (...)

on the uniform grid ``g_j = start + j * step``.  The window holds the grid
points within ``radius * sigma`` of ``c`` clamped to the grid, always
including the grid point nearest to the clamped center.
"""
from __future__ import annotations

import numpy as np

# elements of the dense (rows, n) kernel block materialized at once
_CHUNK_ELEMS = 1 << 21


def _kernel_rows(c, start, step, n, sigma, radius):
    """Dense normalized kernel rows for a 1-D array of centers ``c``."""
    stop = start + step * (n - 1)
    cc = np.clip(c, start, stop)
    reach = radius * sigma
    lo = np.maximum(np.ceil((cc - reach - start) / step), 0.0)
    hi = np.minimum(np.floor((cc + reach - start) / step), n - 1.0)
    k = np.floor((cc - start) / step + 0.5)
    lo = np.minimum(lo, k)
    hi = np.maximum(hi, k)
    idx = np.arange(n, dtype=float)
    g = start + idx * step
    inside = (idx >= lo[:, None]) & (idx <= hi[:, None])
    d = (g[None, :] - c[:, None]) / sigma
    logit = np.where(inside, -0.5 * d * d, -np.inf)
    logit -= logit.max(axis=1, keepdims=True)
    w = np.exp(logit)
    w /= w.sum(axis=1, keepdims=True)
    return w, g[None, :] - c[:, None]


def _x_chunks(M, N, n):
    step = max(1, _CHUNK_ELEMS // max(1, M * n))
    for s in range(0, N, step):
        yield slice(s, min(N, s + step))


def gauss_mix(centers, coefs, start, step, n, sigma, radius):
    """out[p, x, j] = sum_m coefs[p, m, x] * K(centers[m, x])_j."""
    centers = np.asarray(centers, dtype=float)
    coefs = np.asarray(coefs, dtype=float)
    M, N = centers.shape
    P = coefs.shape[0]
    out = np.zeros((P, N, n))
    for sl in _x_chunks(M, N, n):
        nx = sl.stop - sl.start
        w, _ = _kernel_rows(centers[:, sl].ravel(), start, step, n, sigma, radius)
        w = w.reshape(M, nx, n)
        out[:, sl, :] = np.einsum("pmx,mxj->pxj", coefs[:, :, sl], w)
    return out


def gauss_expect(centers, tables, start, step, n, sigma, radius, moment=False):
    """E0[p, m, x] = sum_j K(c)_j T[p, x, j];  E1 adds the factor (g_j - c)."""
    centers = np.asarray(centers, dtype=float)
    tables = np.asarray(tables, dtype=float)
    M, N = centers.shape
    P = tables.shape[0]
    E0 = np.empty((P, M, N))
    E1 = np.empty((P, M, N)) if moment else None
    for sl in _x_chunks(M, N, n):
        nx = sl.stop - sl.start
        w, dev = _kernel_rows(centers[:, sl].ravel(), start, step, n, sigma, radius)
        w = w.reshape(M, nx, n)
        t = tables[:, sl, :]
        E0[:, :, sl] = np.einsum("mxj,pxj->pmx", w, t)
        if moment:
            E1[:, :, sl] = np.einsum("mxj,pxj->pmx", w * dev.reshape(M, nx, n), t)
    return E0, E1
