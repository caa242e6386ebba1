"""Experiment orchestration: single runs, k2 sweeps and mapping scoring."""
from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import __version__, export, kernels
from .annealer import anneal
from .baselines import (
    affine_cost_at_bsnr,
    best_affine,
    evaluate_mapping,
    mc_cost,
    witsenhausen_one_step,
)
from .config import RunConfig
from .problem import achieved_bsnr

RUN_FILES = ("mapping.csv", "estimator.csv", "trajectory.csv", "summary.json", "config.txt")


def _breakdown_dict(bd) -> dict:
    d = asdict(bd)
    d["cost"] = bd.cost
    return d


def run_experiment(cfg: RunConfig, progress=None) -> dict:
    """Anneal (or evaluate a baseline) and return the in-memory report.

    The report holds the final breakdown, achieved b_SNR, the trajectory
    states and the objects needed to export artifacts.
    """
    p = cfg.problem
    grids = cfg.grids
    src = grids.source_grid(p)
    t0 = time.perf_counter()
    states, transitions, controller = [], [], None
    if cfg.mode == "anneal":
        res = anneal(p, grids, cfg.anneal, progress=progress)
        bd, w, controller, states = res.final, res.estimator, res.controller, res.states
        transitions = list(states[-1].transition_log) if states else []
        mapping_obj = controller
    else:
        mapping_obj = best_affine(p)[0] if cfg.mode == "affine" else witsenhausen_one_step(p)
        bd, w = evaluate_mapping(mapping_obj, p, grids, return_estimator=True)
    wall = time.perf_counter() - t0
    bsnr = achieved_bsnr(p, bd.rms_g2) if p.is_side_channel else None
    return {
        "config": cfg,
        "problem": p,
        "src": src,
        "mapping": mapping_obj,
        "estimator": w,
        "states": states,
        "final": bd,
        "bsnr": bsnr,
        "affine_cost": affine_cost_at_bsnr(p, bsnr) if bsnr is not None else best_affine(p)[1],
        "transitions": transitions,
        "wall_clock": wall,
    }


def summary(report: dict) -> dict:
    cfg = report["config"]
    traj = export.trajectory_rows(report["states"])
    return {
        "tool": "witsda",
        "version": __version__,
        "backend": kernels.BACKEND,
        "seed": cfg.seed,
        "final": _breakdown_dict(report["final"]),
        "b_snr": report["bsnr"],
        "affine_cost": report["affine_cost"],
        "wall_clock_s": report["wall_clock"],
        "n_temperatures": len(traj),
        "transitions": [
            {"T": T, "before": list(a), "after": list(b)} for T, a, b in report["transitions"]
        ],
        "config": asdict(cfg),
    }


def write_run(report: dict, out: Path) -> list:
    """Write every run artifact into ``out``; returns the paths written."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    p = report["problem"]
    paths = [
        export.export_mapping(report["mapping"], report["src"].points, out / "mapping.csv", p.is_side_channel),
        export.export_estimator(report["estimator"], out / "estimator.csv"),
        export.export_trajectory(report["states"], out / "trajectory.csv"),
        export.write_json(summary(report), out / "summary.json"),
    ]
    cfg_path = out / "config.txt"
    cfg_path.write_text(report["config"].to_text())
    paths.append(cfg_path)
    return paths


def _sweep_row(cfg: RunConfig, k2: float) -> dict:
    from .free_energy import NumericalError

    c = replace(cfg, preset="side-channel", k2=float(k2), mode="anneal")
    try:
        rep = run_experiment(c)
    except (NumericalError, FloatingPointError, ValueError) as exc:
        return {"k2": float(k2), "bsnr": math.nan, "cost": math.nan, "affine_cost": math.nan,
                "total_D": math.nan, "error": str(exc)}
    return {
        "k2": float(k2),
        "bsnr": rep["bsnr"],
        "cost": rep["final"].cost,
        "total_D": rep["final"].total_D,
        "affine_cost": rep["affine_cost"],
        "error": None,
        "report": rep,
    }


def run_sweep(cfg: RunConfig, k2_list=None, jobs: int = 1, progress=None) -> list:
    """One anneal per k2; rows sorted by achieved b_SNR, failures kept in place."""
    k2_list = list(cfg.k2_list if k2_list is None else k2_list)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_row, [cfg] * len(k2_list), k2_list))
    else:
        rows = []
        for k2 in k2_list:
            rows.append(_sweep_row(cfg, k2))
            if progress is not None:
                progress(rows[-1])
    rows.sort(key=lambda r: (math.isnan(r["bsnr"]), r["bsnr"]))
    return rows


def write_sweep(rows: list, out: Path) -> list:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    paths = [export.export_comparison(rows, out / "comparison.csv")]
    for r in rows:
        rep = r.get("report")
        if rep is not None:
            paths += write_run(rep, out / f"k2_{r['k2']!r}")
    return paths


def score_mapping(cfg: RunConfig, mapping_path, mc_samples: int = 0) -> dict:
    """Quadrature cost (and optionally Monte-Carlo cost) of a mapping CSV."""
    p = cfg.problem
    m = export.import_mapping(mapping_path)
    if p.is_side_channel and m.params.get("g2") is None:
        raise ValueError("side-channel scoring needs a g2 column")
    bd, w = evaluate_mapping(m, p, cfg.grids, return_estimator=True)
    out = {"final": _breakdown_dict(bd)}
    if p.is_side_channel:
        out["b_snr"] = achieved_bsnr(p, bd.rms_g2)
    if mc_samples:
        mean, se = mc_cost(m, w, p, n_samples=mc_samples, seed=cfg.seed, include_side_power=False)
        out["mc_cost"] = mean
        out["mc_std_error"] = se
    return out
