"""Backend selection for the Gaussian kernel contractions.

The compiled extension is used when it imports; otherwise (or when
``WITSDA_PURE_PYTHON=1``) the numpy implementation is used.  Both compute
the same windowed, row-normalized kernel.
"""
from __future__ import annotations

import os

import numpy as np

from . import _pykernels

# kernel support in noise standard deviations; exp(-40.5) is below double eps
RADIUS = 9.0

_backend = _pykernels
BACKEND = "python"
if not os.environ.get("WITSDA_PURE_PYTHON"):
    try:
        from . import _ckernels as _backend  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on the build
        _backend = _pykernels


def get_backend(name: str | None = None):
    """Return the kernel module by name ('cython', 'python') or the active one."""
    if name is None:
        return _backend
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown kernel backend {name!r}")


def available_backends() -> list[str]:
    names = ["python"]
    try:
        from . import _ckernels  # noqa: F401

        names.insert(0, "cython")
    except ImportError:  # pragma: no cover - depends on the build
        pass
    return names


def _resolve(backend):
    if backend is None:
        return _backend
    return get_backend(backend) if isinstance(backend, str) else backend


def gauss_mix(centers, coefs, grid, sigma, backend=None):
    """Mix kernel rows: ``out[p, x, :] = sum_m coefs[p, m, x] K(centers[m, x])``."""
    mod = _resolve(backend)
    centers = np.ascontiguousarray(centers, dtype=float)
    coefs = np.asarray(coefs, dtype=float)
    if coefs.ndim == 2:
        coefs = coefs[None]
    return mod.gauss_mix(centers, coefs, grid.start, grid.step, len(grid), float(sigma), RADIUS)


def gauss_expect(centers, tables, grid, sigma, moment=False, backend=None):
    """Kernel expectations of per-source tables; see ``_pykernels.gauss_expect``."""
    mod = _resolve(backend)
    centers = np.ascontiguousarray(centers, dtype=float)
    tables = np.asarray(tables, dtype=float)
    if tables.ndim == 2:
        tables = tables[None]
    return mod.gauss_expect(
        centers, tables, grid.start, grid.step, len(grid), float(sigma), RADIUS, bool(moment)
    )
