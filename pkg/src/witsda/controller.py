"""Randomized piecewise-affine first controller.

Each stage (``g1`` and, for the side-channel variant, ``g2``) is a bank of
affine local models ``g_m(x0) = a_m x0 + b_m`` together with association
probabilities ``p(m | x0)`` on the source grid.  Probabilities are stored as
an ``(M, N)`` array indexed ``[model, source point]``.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .problem import Stage
from .quadrature import Grid1D

PROB_FLOOR = 1e-300
DEFAULT_M_MAX = 32


@dataclass(frozen=True)
class LocalModel:
    slope: float
    intercept: float

    def __post_init__(self):
        if not (np.isfinite(self.slope) and np.isfinite(self.intercept)):
            raise ValueError("local model parameters must be finite")


def evaluate_model(m: LocalModel, x0):
    return m.slope * x0 + m.intercept


@dataclass(frozen=True, eq=False)
class LocalModelBank:
    stage: Stage
    slopes: np.ndarray
    intercepts: np.ndarray
    m_max: int = DEFAULT_M_MAX

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.slopes, dtype=float)).copy()
        b = np.atleast_1d(np.asarray(self.intercepts, dtype=float)).copy()
        if a.ndim != 1 or a.shape != b.shape:
            raise ValueError("slopes and intercepts must be 1-D arrays of equal length")
        if not 1 <= a.size <= self.m_max:
            raise ValueError(f"bank size {a.size} outside [1, {self.m_max}]")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise ValueError("local model parameters must be finite")
        a.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "stage", Stage(self.stage))
        object.__setattr__(self, "slopes", a)
        object.__setattr__(self, "intercepts", b)

    @classmethod
    def from_models(cls, stage, models, m_max: int = DEFAULT_M_MAX) -> "LocalModelBank":
        return cls(stage, [m.slope for m in models], [m.intercept for m in models], m_max)

    def __len__(self) -> int:
        return self.slopes.size

    @property
    def models(self) -> list[LocalModel]:
        return [LocalModel(float(a), float(b)) for a, b in zip(self.slopes, self.intercepts)]

    def outputs(self, x0: np.ndarray) -> np.ndarray:
        """Model outputs on the source points, shape ``(M, N)``."""
        return self.slopes[:, None] * x0[None, :] + self.intercepts[:, None]

    def with_params(self, slopes, intercepts) -> "LocalModelBank":
        return replace(self, slopes=slopes, intercepts=intercepts)


@dataclass(frozen=True, eq=False)
class AssociationMatrix:
    probs: np.ndarray

    def __post_init__(self):
        p = np.array(self.probs, dtype=float, ndmin=2)
        if p.ndim != 2:
            raise ValueError("association probabilities must be a 2-D array")
        if np.any(p < 0) or np.any(p > 1 + 1e-12):
            raise ValueError("association probabilities must lie in [0, 1]")
        if not np.allclose(p.sum(axis=0), 1.0, rtol=0, atol=1e-10):
            raise ValueError("association columns must sum to one")
        p.flags.writeable = False
        object.__setattr__(self, "probs", p)

    @classmethod
    def uniform(cls, n_models: int, n_points: int) -> "AssociationMatrix":
        return cls(np.full((n_models, n_points), 1.0 / n_models))

    @classmethod
    def one_hot(cls, index: np.ndarray, n_models: int) -> "AssociationMatrix":
        index = np.asarray(index, dtype=int)
        p = np.zeros((n_models, index.size))
        p[index, np.arange(index.size)] = 1.0
        return cls(p)

    @property
    def shape(self):
        return self.probs.shape


def _clean_columns(p: np.ndarray) -> np.ndarray:
    p = np.where(p < PROB_FLOOR, 0.0, p)
    s = p.sum(axis=0, keepdims=True)
    empty = s[0] <= 0
    if empty.any():
        p[:, empty] = 1.0 / p.shape[0]
        s[:, empty] = 1.0
    return p / s


@dataclass(frozen=True, eq=False)
class RandomizedController:
    bank1: LocalModelBank
    assoc1: AssociationMatrix
    bank2: Optional[LocalModelBank] = None
    assoc2: Optional[AssociationMatrix] = None

    def __post_init__(self):
        if (self.bank2 is None) != (self.assoc2 is None):
            raise ValueError("bank2 and assoc2 must be given together")
        if self.assoc1.shape[0] != len(self.bank1):
            raise ValueError("assoc1 rows do not match bank1 size")
        if self.bank2 is not None:
            if self.assoc2.shape[0] != len(self.bank2):
                raise ValueError("assoc2 rows do not match bank2 size")
            if self.assoc2.shape[1] != self.assoc1.shape[1]:
                raise ValueError("association matrices cover different source grids")

    @property
    def has_side_channel(self) -> bool:
        return self.bank2 is not None

    @property
    def n_points(self) -> int:
        return self.assoc1.shape[1]

    def banks(self):
        return (self.bank1,) if self.bank2 is None else (self.bank1, self.bank2)

    def assocs(self):
        return (self.assoc1,) if self.assoc2 is None else (self.assoc1, self.assoc2)

    def g1(self, x0: np.ndarray) -> np.ndarray:
        return self.bank1.outputs(x0)

    def g2(self, x0: np.ndarray) -> Optional[np.ndarray]:
        return None if self.bank2 is None else self.bank2.outputs(x0)

    def replace(self, **kw) -> "RandomizedController":
        return replace(self, **kw)

    def hard_mapping(self, x0: np.ndarray):
        """Most likely model output per source point: ``(g1, g2 or None)``."""
        i1 = np.argmax(self.assoc1.probs, axis=0)
        g1 = self.g1(x0)[i1, np.arange(x0.size)]
        if self.bank2 is None:
            return g1, None
        i2 = np.argmax(self.assoc2.probs, axis=0)
        return g1, self.g2(x0)[i2, np.arange(x0.size)]


@dataclass(frozen=True, eq=False)
class TabulatedController:
    """A deterministic controller given by its values on the source grid.

    Quacks like a quenched :class:`RandomizedController` with one model
    whose output is read from the table, which is all the cost and
    estimator routines need.
    """

    g1_values: np.ndarray
    g2_values: Optional[np.ndarray] = None

    def __post_init__(self):
        g1 = np.asarray(self.g1_values, dtype=float)
        if g1.ndim != 1 or not np.all(np.isfinite(g1)):
            raise ValueError("g1 table must be a finite 1-D array")
        object.__setattr__(self, "g1_values", g1)
        if self.g2_values is not None:
            g2 = np.asarray(self.g2_values, dtype=float)
            if g2.shape != g1.shape or not np.all(np.isfinite(g2)):
                raise ValueError("g2 table must be finite and match g1")
            object.__setattr__(self, "g2_values", g2)
        ones = AssociationMatrix(np.ones((1, g1.size)))
        object.__setattr__(self, "assoc1", ones)
        object.__setattr__(self, "assoc2", None if self.g2_values is None else ones)

    @property
    def has_side_channel(self) -> bool:
        return self.g2_values is not None

    @property
    def n_points(self) -> int:
        return self.g1_values.size

    def assocs(self):
        return (self.assoc1,) if self.assoc2 is None else (self.assoc1, self.assoc2)

    def _check(self, x0):
        if np.shape(x0) != self.g1_values.shape:
            raise ValueError("tabulated controller evaluated off its source grid")

    def g1(self, x0: np.ndarray) -> np.ndarray:
        self._check(x0)
        return self.g1_values[None, :]

    def g2(self, x0: np.ndarray) -> Optional[np.ndarray]:
        self._check(x0)
        return None if self.g2_values is None else self.g2_values[None, :]

    def hard_mapping(self, x0: np.ndarray):
        self._check(x0)
        return self.g1_values.copy(), None if self.g2_values is None else self.g2_values.copy()


def single_model_controller(
    slope1: float,
    intercept1: float,
    n_points: int,
    slope2: Optional[float] = None,
    intercept2: float = 0.0,
    m_max: int = DEFAULT_M_MAX,
) -> RandomizedController:
    bank1 = LocalModelBank(Stage.G1, [slope1], [intercept1], m_max)
    assoc = AssociationMatrix(np.ones((1, n_points)))
    if slope2 is None:
        return RandomizedController(bank1, assoc)
    bank2 = LocalModelBank(Stage.G2, [slope2], [intercept2], m_max)
    return RandomizedController(bank1, assoc, bank2, assoc)


def entropy(c: RandomizedController, src: Grid1D) -> float:
    """Sum over stages of the conditional entropy H(M_i | x0), in nats."""
    total = 0.0
    for assoc in c.assocs():
        p = assoc.probs
        plogp = np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0)
        total -= float(np.dot(src.weights, plogp.sum(axis=0)))
    return max(total, 0.0)


def quench_assoc(costs: np.ndarray) -> AssociationMatrix:
    """One-hot columns at the per-point argmin cost (lowest index on ties)."""
    costs = np.asarray(costs, dtype=float)
    if not np.all(np.isfinite(costs)):
        raise ValueError("quench needs finite costs")
    return AssociationMatrix.one_hot(np.argmin(costs, axis=0), costs.shape[0])


def quench(c: RandomizedController, partial_costs) -> RandomizedController:
    """Hard-assign every source point to its cheapest model, per stage.

    ``partial_costs`` holds one ``(M_i, N)`` table per stage present.
    """
    tables = list(partial_costs)
    if len(tables) != len(c.banks()):
        raise ValueError("need one cost table per controller stage")
    new = {"assoc1": quench_assoc(tables[0])}
    if c.has_side_channel:
        new["assoc2"] = quench_assoc(tables[1])
    return c.replace(**new)


def duplicate_and_perturb(
    bank: LocalModelBank,
    assoc: AssociationMatrix,
    eps: float,
    rng_seed: int,
    slope_eps: float = 0.0,
):
    """Split every model into two, offsetting the copy's intercept.

    Returns ``(bank, assoc, duplicated)``.  Each copy inherits half of its
    parent's association probability, so the induced mapping distribution
    is unchanged.  When doubling would exceed ``bank.m_max`` the inputs are
    returned unchanged with ``duplicated=False``.
    """
    M = len(bank)
    if 2 * M > bank.m_max:
        return bank, assoc, False
    rng = np.random.default_rng(rng_seed)
    offsets = rng.uniform(-eps, eps, size=M) if eps > 0 else np.zeros(M)
    slope_offsets = rng.uniform(-slope_eps, slope_eps, size=M) if slope_eps > 0 else np.zeros(M)
    a = np.concatenate([bank.slopes, bank.slopes + slope_offsets])
    b = np.concatenate([bank.intercepts, bank.intercepts + offsets])
    half = 0.5 * assoc.probs
    return bank.with_params(a, b), AssociationMatrix(np.vstack([half, half])), True


def is_symmetric_grid(src: Grid1D, rtol: float = 1e-12) -> bool:
    """True when the source grid and weights are mirror images about zero."""
    x = src.points
    scale = float(np.max(np.abs(x))) or 1.0
    return bool(
        np.allclose(x[::-1], -x, rtol=0, atol=rtol * scale)
        and np.allclose(src.weights[::-1], src.weights, rtol=rtol, atol=0)
    )


def mirror_pairs(bank: LocalModelBank, assoc: AssociationMatrix, tol: float = 1e-8) -> Optional[np.ndarray]:
    """Pairing ``pi`` with model ``pi[m]`` the mirror image of model ``m``.

    The mirror of ``a x + b`` on ``x`` is ``a x - b`` on ``-x``; associations
    must match under ``x -> -x`` as well.  Returns None when the bank is not
    closed under mirroring.  Assumes a symmetric source grid.
    """
    a, b, P = bank.slopes, bank.intercepts, assoc.probs
    scale = 1.0 + float(np.max(np.abs(b)))
    M = a.size
    pi = np.full(M, -1)
    for i in range(M):
        if pi[i] >= 0:
            continue
        d = np.abs(a - a[i]) + np.abs(b + b[i])
        cand = [j for j in np.argsort(d, kind="stable") if d[j] <= tol * scale and (pi[j] < 0)]
        match = next((j for j in cand if np.max(np.abs(P[j, ::-1] - P[i])) <= tol), None)
        if match is None:
            return None
        pi[i], pi[match] = match, i
    return pi


def symmetrize(bank: LocalModelBank, assoc: AssociationMatrix, pi: np.ndarray):
    """Project a nearly mirror-symmetric bank onto exact symmetry."""
    a = 0.5 * (bank.slopes + bank.slopes[pi])
    b = 0.5 * (bank.intercepts - bank.intercepts[pi])
    P = 0.5 * (assoc.probs + assoc.probs[pi][:, ::-1])
    return bank.with_params(a, b), AssociationMatrix(_clean_columns(P))


def symmetric_duplicate(
    bank: LocalModelBank,
    assoc: AssociationMatrix,
    pi: np.ndarray,
    eps: float,
    rng_seed: int,
    slope_eps: float = 0.0,
):
    """Duplicate a mirror-symmetric bank while keeping it symmetric.

    A mirror pair ``(m, pi[m])`` gets copies with mirrored offsets.  A
    self-mirror model keeps half its probability and splits the other half
    between two copies at intercepts ``+-delta``.  Returns ``(bank, assoc,
    parent, duplicated)`` where ``parent[k]`` is the source of new model k.
    """
    M = len(bank)
    n_self = int(np.count_nonzero(pi == np.arange(M)))
    if 2 * M + n_self > bank.m_max:
        return bank, assoc, np.arange(M), False
    rng = np.random.default_rng(rng_seed)
    da = rng.uniform(-slope_eps, slope_eps, size=M) if slope_eps > 0 else np.zeros(M)
    db = rng.uniform(-eps, eps, size=M) if eps > 0 else np.zeros(M)
    a, b, rows, parent = list(bank.slopes), list(bank.intercepts), list(0.5 * assoc.probs), list(range(M))
    for i in range(M):
        j = pi[i]
        if j < i:
            continue
        if j == i:
            for sign in (1.0, -1.0):
                a.append(bank.slopes[i] + da[i])
                b.append(sign * db[i])
                rows.append(0.25 * assoc.probs[i])
                parent.append(i)
        else:
            for k, sign in ((i, 1.0), (j, -1.0)):
                a.append(bank.slopes[k] + da[i])
                b.append(bank.intercepts[k] + sign * db[i])
                rows.append(0.5 * assoc.probs[k])
                parent.append(k)
    return bank.with_params(a, b), AssociationMatrix(np.array(rows)), np.array(parent), True


def _model_classes(bank: LocalModelBank, tol: float, alive: np.ndarray) -> np.ndarray:
    """Label models by equivalence class under |da| + |db| <= tol (transitive)."""
    M = len(bank)
    labels = np.arange(M)

    def root(i):
        while labels[i] != i:
            labels[i] = labels[labels[i]]
            i = labels[i]
        return i

    for i in range(M):
        for j in range(i + 1, M):
            if not (alive[i] and alive[j]):
                continue
            d = abs(bank.slopes[i] - bank.slopes[j]) + abs(bank.intercepts[i] - bank.intercepts[j])
            if d <= tol:
                ri, rj = root(i), root(j)
                if ri != rj:
                    labels[max(ri, rj)] = min(ri, rj)
    return np.array([root(i) for i in range(M)])


def effective_model_count(bank: LocalModelBank, tol: float, mass=None) -> int:
    """Number of distinct models up to ``tol``; models with zero mass are ignored."""
    alive = np.ones(len(bank), bool) if mass is None else np.asarray(mass) > 0
    if not alive.any():
        return 1
    labels = _model_classes(bank, tol, alive)
    return int(np.unique(labels[alive]).size)


def merge_models(bank: LocalModelBank, assoc: AssociationMatrix, src: Grid1D, tol: float, min_mass: float = 0.0):
    """Collapse equivalent models and drop models with negligible mass.

    Returns ``(bank, assoc, kept)`` where ``kept`` lists the indices of the
    surviving models in the input bank.  Probabilities of merged models
    are summed; the survivor's parameters are the mass-weighted mean.
    """
    mass = assoc.probs @ src.weights
    alive = mass > min_mass
    if not alive.any():
        alive[np.argmax(mass)] = True
    labels = _model_classes(bank, tol, alive)
    keep = [i for i in range(len(bank)) if alive[i] and labels[i] == i]
    # a dead root can head no class because dead models are never linked
    a, b, rows = [], [], []
    for r in keep:
        members = np.flatnonzero((labels == r) & alive)
        mw = mass[members]
        wts = mw / mw.sum() if mw.sum() > 0 else np.full(members.size, 1.0 / members.size)
        a.append(float(np.dot(wts, bank.slopes[members])))
        b.append(float(np.dot(wts, bank.intercepts[members])))
        rows.append(assoc.probs[members].sum(axis=0))
    p = _clean_columns(np.maximum(np.array(rows), 0.0))
    return bank.with_params(a, b), AssociationMatrix(p), keep
