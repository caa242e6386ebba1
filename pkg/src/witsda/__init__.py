"""Deterministic annealing for Witsenhausen's counterexample and its side-channel variant."""

__version__ = "0.1.0"

from .annealer import AnnealConfig, AnnealResult, anneal, sweep_k2  # noqa: E402
from .baselines import (  # noqa: E402
    DeterministicMapping,
    MappingKind,
    best_affine,
    evaluate_mapping,
    mc_cost,
    witsenhausen_one_step,
)
from .controller import RandomizedController  # noqa: E402
from .estimator import EstimatorTable, GridConfig, build_estimator, estimate  # noqa: E402
from .free_energy import CostBreakdown, NumericalError, expected_cost  # noqa: E402
from .problem import ProblemSpec, Variant  # noqa: E402

__all__ = [
    "AnnealConfig",
    "AnnealResult",
    "CostBreakdown",
    "DeterministicMapping",
    "EstimatorTable",
    "GridConfig",
    "MappingKind",
    "NumericalError",
    "ProblemSpec",
    "RandomizedController",
    "Variant",
    "anneal",
    "best_affine",
    "build_estimator",
    "estimate",
    "evaluate_mapping",
    "expected_cost",
    "mc_cost",
    "sweep_k2",
    "witsenhausen_one_step",
]
