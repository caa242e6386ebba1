"""Problem definitions: the original counterexample and the side-channel variant.

Signal flow (both variants)::

    x1 = x0 + g1(x0)            first controller acts on the state
    y1 = x1 + n1                second controller's noisy observation
    z  = g2(x0) + n2            side channel (side-channel variant only)
    x2 = x1 - W(y1, z)          residual after the second controller

with total cost ``k1^2 E{g1^2} + k2^2 E{g2^2} + E{x2^2}``.  For the original
counterexample ``k2`` and ``n2`` play no role.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

from .quadrature import GaussianSpec


class Variant(str, enum.Enum):
    WCE = "wce"
    SIDE_CHANNEL = "side-channel"


class Stage(str, enum.Enum):
    G1 = "g1"
    G2 = "g2"


@dataclass(frozen=True)
class ProblemSpec:
    variant: Variant
    k1: float
    k2: float = 0.0
    source: GaussianSpec = field(default_factory=lambda: GaussianSpec(0.0, 5.0))
    obs_noise: GaussianSpec = field(default_factory=lambda: GaussianSpec(0.0, 1.0))
    side_noise: GaussianSpec = field(default_factory=lambda: GaussianSpec(0.0, 1.0))

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        if not self.k1 > 0:
            raise ValueError(f"k1 must be positive, got {self.k1}")
        if self.k2 < 0:
            raise ValueError(f"k2 must be non-negative, got {self.k2}")
        if self.obs_noise.std != 1.0 or self.obs_noise.mean != 0.0:
            raise ValueError("observation noise is fixed to N(0, 1)")

    @classmethod
    def wce(cls, k: float = 0.2, sigma_x0: float = 5.0) -> "ProblemSpec":
        return cls(Variant.WCE, k1=k, source=GaussianSpec(0.0, sigma_x0))

    @classmethod
    def side_channel(
        cls, k2: float, k1: float = 0.2, sigma_x0: float = 5.0, sigma_n2: float = 1.0
    ) -> "ProblemSpec":
        return cls(
            Variant.SIDE_CHANNEL,
            k1=k1,
            k2=k2,
            source=GaussianSpec(0.0, sigma_x0),
            side_noise=GaussianSpec(0.0, sigma_n2),
        )

    @property
    def is_side_channel(self) -> bool:
        return self.variant is Variant.SIDE_CHANNEL

    @property
    def sigma_x0(self) -> float:
        return self.source.std

    @property
    def sigma_n2(self) -> float:
        return self.side_noise.std

    def with_k2(self, k2: float) -> "ProblemSpec":
        return replace(self, k2=k2)


@dataclass(frozen=True)
class SignalPoint:
    x0: float
    g1: float
    g2: float = 0.0

    @property
    def x1(self) -> float:
        return self.x0 + self.g1


def stage_cost(p: ProblemSpec, s: SignalPoint) -> float:
    """Control-effort part of the cost at one signal point.

    The estimation error E{x2^2} is not included; it needs the second
    controller and is added by :mod:`witsda.free_energy`.
    """
    cost = p.k1 ** 2 * s.g1 ** 2
    if p.is_side_channel:
        cost += p.k2 ** 2 * s.g2 ** 2
    return cost


def achieved_bsnr(p: ProblemSpec, rms_g2: float) -> float:
    """Side-channel b_SNR = rms(g2) / sigma_n2."""
    if not p.is_side_channel:
        raise ValueError("b_SNR is only defined for the side-channel variant")
    if rms_g2 < 0 or not math.isfinite(rms_g2):
        raise ValueError(f"rms_g2 must be a non-negative finite number, got {rms_g2}")
    return rms_g2 / p.sigma_n2
