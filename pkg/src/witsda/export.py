"""CSV and JSON artifacts: mappings, estimator tables, trajectories, summaries.

Floats are written with ``repr`` so a file read back reproduces the values
bit for bit.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable

import numpy as np

from .baselines import DeterministicMapping, MappingKind
from .estimator import EstimatorTable

MAPPING_COLUMNS = ("x0", "g1", "g2", "x1")
TRAJECTORY_COLUMNS = (
    "T", "F", "D", "H", "cost", "rms_g2", "effective_g1", "effective_g2",
    "models_g1", "models_g2", "sweeps", "merged",
)
COMPARISON_COLUMNS = ("b_SNR", "affine_cost", "da_cost", "improvement", "k2", "error")


def _fmt(v) -> str:
    if v is None:
        return ""
    v = float(v)
    return repr(v) if math.isfinite(v) else ("nan" if math.isnan(v) else ("inf" if v > 0 else "-inf"))


def _write_rows(path, header, rows):
    path = Path(path)
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        wr.writerows(rows)
    return path


def mapping_table(m, x0: np.ndarray):
    """``(g1, g2)`` of a controller or deterministic mapping on ``x0``.

    ``g2`` is None for a WCE controller; deterministic mappings always
    return an array (zeros when they carry no side signal).
    """
    if isinstance(m, DeterministicMapping):
        return m.g1(x0), m.g2(x0)
    return m.hard_mapping(x0)


def export_mapping(m, x0: np.ndarray, path, side_channel: bool):
    """Write ``x0,g1,g2,x1`` per source point; ``g2`` is left empty for WCE."""
    x0 = np.asarray(x0, dtype=float)
    g1, g2 = mapping_table(m, x0)
    if not side_channel:
        g2 = None
    elif g2 is None:
        raise ValueError("side-channel export needs a g2 mapping")
    rows = (
        (_fmt(x), _fmt(a), "" if g2 is None else _fmt(g2[i]), _fmt(x + a))
        for i, (x, a) in enumerate(zip(x0, g1))
    )
    return _write_rows(path, MAPPING_COLUMNS, rows)


def import_mapping(path) -> DeterministicMapping:
    """Read a mapping CSV back as a sampled (interpolated) mapping."""
    with Path(path).open(newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd, None)
        if header is None or tuple(h.strip() for h in header[:2]) != ("x0", "g1"):
            raise ValueError(f"{path}: expected a header starting with x0,g1")
        cols = [h.strip() for h in header]
        i2 = cols.index("g2") if "g2" in cols else None
        x0, g1, g2 = [], [], []
        for n, row in enumerate(rd, start=2):
            if not row:
                continue
            try:
                x0.append(float(row[0]))
                g1.append(float(row[1]))
                cell = row[i2].strip() if i2 is not None and i2 < len(row) else ""
                g2.append(float(cell) if cell else None)
            except (ValueError, IndexError) as exc:
                raise ValueError(f"{path}:{n}: malformed row {row!r}") from exc
    if any(v is None for v in g2) and not all(v is None for v in g2):
        raise ValueError(f"{path}: g2 column is only partially filled")
    g2_arr = None if (not g2 or g2[0] is None) else np.array(g2)
    return DeterministicMapping(MappingKind.SAMPLED, {"x0": np.array(x0), "g1": np.array(g1), "g2": g2_arr})


def export_estimator(w: EstimatorTable, path):
    """``y,W`` for WCE or ``y,z,W`` (y-major) for the side channel."""
    y = w.y_grid.points
    if w.z_grid is None:
        return _write_rows(path, ("y", "W"), ((_fmt(a), _fmt(v)) for a, v in zip(y, w.values)))
    z = w.z_grid.points
    rows = ((_fmt(y[i]), _fmt(z[j]), _fmt(w.values[i, j])) for i in range(y.size) for j in range(z.size))
    return _write_rows(path, ("y", "z", "W"), rows)


def trajectory_rows(states) -> list:
    rows = []
    for s in states:
        bd = s.breakdown
        eff = tuple(s.effective_models) + (None,)
        nm = tuple(s.n_models) + (None,)
        rows.append({
            "T": s.T, "F": bd.free_energy_F, "D": bd.total_D, "H": bd.entropy_H,
            "cost": bd.cost, "rms_g2": bd.rms_g2,
            "effective_g1": eff[0], "effective_g2": eff[1],
            "models_g1": nm[0], "models_g2": nm[1],
            "sweeps": s.sweep_count, "merged": s.merged,
        })
    return rows


def export_trajectory(states, path):
    def cell(v):
        return "" if v is None else (str(v) if isinstance(v, (int, np.integer)) else _fmt(v))

    rows = ([cell(r[k]) for k in TRAJECTORY_COLUMNS] for r in trajectory_rows(states))
    return _write_rows(path, TRAJECTORY_COLUMNS, rows)


def read_csv_columns(path) -> dict:
    """Columns of a numeric CSV as float arrays (empty cells become NaN)."""
    with Path(path).open(newline="") as fh:
        rd = csv.DictReader(fh)
        data = {k: [] for k in rd.fieldnames or ()}
        for row in rd:
            for k in data:
                v = row[k]
                data[k].append(float(v) if v not in ("", None) else math.nan)
    return {k: np.array(v) for k, v in data.items()}


def comparison_rows(sweep_rows: Iterable[dict]) -> list:
    """Comparison rows: b_SNR, affine cost, DA cost, relative improvement over affine."""
    out = []
    for r in sweep_rows:
        aff, da = r.get("affine_cost", math.nan), r.get("cost", math.nan)
        imp = (aff - da) / aff if (aff and math.isfinite(aff) and math.isfinite(da)) else math.nan
        out.append({"b_SNR": r.get("bsnr", math.nan), "affine_cost": aff, "da_cost": da,
                    "improvement": imp, "k2": r["k2"], "error": r.get("error") or ""})
    return out


def export_comparison(sweep_rows, path):
    rows = ([_fmt(r[k]) if k != "error" else r[k] for k in COMPARISON_COLUMNS] for r in comparison_rows(sweep_rows))
    return _write_rows(path, COMPARISON_COLUMNS, rows)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if hasattr(obj, "value") and not isinstance(obj, (int, str)):
        return obj.value
    return obj


def write_json(data: dict, path):
    path = Path(path)
    path.write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")
    return path
