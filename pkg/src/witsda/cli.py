"""Command-line entry point: ``witsda {run,sweep,score,selftest}``.

Exit codes: 0 success, 1 failed self-test, 2 configuration or usage error
(nothing is written), 3 numerical abort, 4 output I/O failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import OUT_ENV, ConfigError, build_config, load_config

EXIT_OK = 0
EXIT_SELFTEST = 1
EXIT_PARSE = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _k2_list(text: str):
    try:
        return tuple(float(x) for x in text.replace(",", " ").split())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad k2 list {text!r}") from exc


def _add_common(sp):
    sp.add_argument("--config", help="flat 'key = value' config file")
    sp.add_argument("--preset", choices=["wce", "side-channel"])
    sp.add_argument("--k1", type=float)
    sp.add_argument("--k2", type=float)
    sp.add_argument("--sigma-x0", dest="sigma_x0", type=float)
    sp.add_argument("--sigma-n2", dest="sigma_n2", type=float)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--grid-scale", dest="grid_scale", choices=["fast", "fine"])
    sp.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or ./witsda-out)")
    sp.add_argument("--jobs", type=int, help="worker processes for sweeps")
    sp.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="witsda", description="Deterministic annealing for Witsenhausen-type control problems")
    sub = ap.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="anneal one problem (or evaluate a baseline) and export artifacts")
    _add_common(run)
    run.add_argument("--mode", choices=["anneal", "affine", "one-step"])

    sweep = sub.add_parser("sweep", help="side-channel k2 sweep with an affine-vs-annealed comparison table")
    _add_common(sweep)
    sweep.add_argument("--k2-list", dest="k2_list", type=_k2_list)

    score = sub.add_parser("score", help="evaluate a mapping CSV (x0,g1[,g2])")
    _add_common(score)
    score.add_argument("mapping", help="CSV with columns x0,g1,g2,x1")
    score.add_argument("--mc-samples", dest="mc_samples", type=int, default=0)

    sub.add_parser("selftest", help="run the fast invariant suite")
    return ap


_CONFIG_KEYS = ("preset", "k1", "k2", "sigma_x0", "sigma_n2", "seed", "grid_scale", "out", "jobs", "mode", "k2_list")


def _config_from_args(args):
    file_values = load_config(args.config) if getattr(args, "config", None) else {}
    overrides = {k: getattr(args, k, None) for k in _CONFIG_KEYS}
    return build_config(file_values, overrides)


def _progress(state):
    bd = state.breakdown
    logging.getLogger("witsda").info(
        "T=%.4g D=%.6f F=%.6f H=%.3f models=%s sweeps=%d",
        state.T, bd.total_D, bd.free_energy_F, bd.entropy_H, state.effective_models, state.sweep_count,
    )


def main(argv=None) -> int:
    from .free_energy import NumericalError

    try:
        args = build_parser().parse_args(argv)
        if args.verb == "selftest":
            from .selftest import run_selftest

            return EXIT_OK if run_selftest() else EXIT_SELFTEST
        cfg = _config_from_args(args)
        if args.verb == "score":
            with open(args.mapping):
                pass
    except ConfigError as exc:
        print(f"witsda: configuration error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except OSError as exc:
        print(f"witsda: cannot read input: {exc}", file=sys.stderr)
        return EXIT_PARSE

    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    from . import harness

    out = cfg.output_dir()
    try:
        if args.verb == "run":
            rep = harness.run_experiment(cfg, progress=_progress)
            harness.write_run(rep, out)
            result = {"cost": rep["final"].cost, "total_D": rep["final"].total_D, "b_snr": rep["bsnr"], "out": str(out)}
        elif args.verb == "sweep":
            rows = harness.run_sweep(cfg, jobs=cfg.jobs)
            harness.write_sweep(rows, out)
            result = {"rows": [{k: r[k] for k in ("k2", "bsnr", "cost", "affine_cost", "error")} for r in rows],
                      "out": str(out)}
        else:
            try:
                result = harness.score_mapping(cfg, args.mapping, args.mc_samples)
            except ValueError as exc:
                print(f"witsda: bad mapping file: {exc}", file=sys.stderr)
                return EXIT_PARSE
    except (NumericalError, FloatingPointError) as exc:
        print(f"witsda: numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"witsda: output error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(json.dumps(result, indent=2, default=lambda v: None))
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
