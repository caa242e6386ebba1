"""Run configuration: flat ``key = value`` files with ``#`` comments."""
from __future__ import annotations

import math
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

from .annealer import AnnealConfig
from .estimator import GridConfig
from .problem import ProblemSpec

OUT_ENV = "WITSDA_OUT"
DEFAULT_OUT = "witsda-out"
DEFAULT_K2_LIST = (1e3, 0.08, 0.05)


class ConfigError(ValueError):
    """Malformed configuration text or values."""


@dataclass
class RunConfig:
    preset: str = "wce"
    k1: float = 0.2
    k2: float = 0.08
    sigma_x0: float = 5.0
    sigma_n2: float = 1.0
    seed: int = 0
    grid_scale: str = "fast"
    n_source: Optional[int] = None
    n_y: Optional[int] = None
    n_z: Optional[int] = None
    mode: str = "anneal"
    T0: Optional[float] = None
    cool_factor: float = 0.92
    T_min: Optional[float] = None
    inner_tol: float = 1e-6
    inner_max_iters: int = 200
    perturb_eps: Optional[float] = None
    slope_eps: float = 1.0
    merge_tol: Optional[float] = None
    symmetric: bool = True
    m_max1: int = 32
    m_max2: int = 32
    k2_list: tuple = field(default=DEFAULT_K2_LIST)
    out: Optional[str] = None
    jobs: int = 1

    def __post_init__(self):
        if self.preset not in ("wce", "side-channel"):
            raise ConfigError(f"preset must be 'wce' or 'side-channel', got {self.preset!r}")
        if self.grid_scale not in ("fast", "fine"):
            raise ConfigError(f"grid_scale must be 'fast' or 'fine', got {self.grid_scale!r}")
        if self.mode not in ("anneal", "affine", "one-step"):
            raise ConfigError(f"mode must be anneal, affine or one-step, got {self.mode!r}")
        for name in ("k1", "sigma_x0", "sigma_n2", "cool_factor", "inner_tol", "slope_eps"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0 or (v == 0 and name != "slope_eps"):
                raise ConfigError(f"{name} must be positive, got {v}")
        if not 0 < self.cool_factor < 1:
            raise ConfigError("cool_factor must lie in (0, 1)")
        if self.k2 < 0 or not math.isfinite(self.k2):
            raise ConfigError(f"k2 must be non-negative, got {self.k2}")
        for name in ("n_source", "n_y", "n_z", "inner_max_iters", "m_max1", "m_max2", "jobs"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ConfigError(f"{name} must be a positive count, got {v}")
        if self.n_source is not None and self.n_source % 2 == 0:
            raise ConfigError("n_source must be odd")
        if self.mode == "one-step" and self.preset != "wce":
            raise ConfigError("the one-step baseline exists only for the wce preset")
        if not self.k2_list or any(k < 0 for k in self.k2_list):
            raise ConfigError("k2_list must hold non-negative values")

    @property
    def problem(self) -> ProblemSpec:
        if self.preset == "wce":
            return ProblemSpec.wce(self.k1, self.sigma_x0)
        return ProblemSpec.side_channel(self.k2, self.k1, self.sigma_x0, self.sigma_n2)

    @property
    def grids(self) -> GridConfig:
        base = GridConfig.fine() if self.grid_scale == "fine" else GridConfig.fast()
        return GridConfig(
            n_source=self.n_source or base.n_source,
            n_y=self.n_y or base.n_y,
            n_z=self.n_z or base.n_z,
        )

    @property
    def anneal(self) -> AnnealConfig:
        return AnnealConfig(
            T0="auto" if self.T0 is None else self.T0,
            cool_factor=self.cool_factor,
            T_min=self.T_min,
            inner_tol=self.inner_tol,
            inner_max_iters=self.inner_max_iters,
            perturb_eps=self.perturb_eps,
            slope_eps=self.slope_eps,
            merge_tol=self.merge_tol,
            symmetric=self.symmetric,
            rng_seed=self.seed,
            m_max1=self.m_max1,
            m_max2=self.m_max2,
        )

    def output_dir(self) -> Path:
        """Explicit ``out`` wins, then the environment override, then the default."""
        return Path(self.out or os.environ.get(OUT_ENV) or DEFAULT_OUT)

    def to_text(self) -> str:
        """Config echo in the same ``key = value`` format that :func:`parse_config` reads."""
        lines = []
        for k, v in asdict(self).items():
            if v is None:
                continue
            if isinstance(v, (tuple, list)):
                v = ", ".join(repr(float(x)) for x in v)
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{k} = {v}")
        return "\n".join(lines) + "\n"


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, raw: str):
    t = _TYPES[key]
    try:
        if "tuple" in t:
            return tuple(float(x) for x in raw.replace(",", " ").split())
        if "bool" in t:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if raw.lower() == "none" and "Optional" in t:
            return None
        if "int" in t:
            return int(raw)
        if "float" in t:
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc


def parse_config(text: str, source: str = "<config>") -> dict:
    """Parse ``key = value`` lines; blank lines and ``#`` comments are ignored."""
    out = {}
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{n}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _TYPES:
            raise ConfigError(f"{source}:{n}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"{source}:{n}: duplicate key {key!r}")
        if not raw:
            raise ConfigError(f"{source}:{n}: empty value for {key!r}")
        out[key] = _coerce(key, raw)
    return out


def load_config(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, str(path))


def build_config(file_values: Optional[dict] = None, overrides: Optional[dict] = None) -> RunConfig:
    """Merge file values and command-line overrides (the latter win)."""
    values = dict(file_values or {})
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    try:
        return RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
