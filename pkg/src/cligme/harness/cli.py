"""Command-line entry point: ``cligme {demo,sweep,compare,certify}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from ..gme import check_overall_convexity
from .experiment import CASES, MODELS, ExperimentConfig, SweepRow, build_model, compare, run_trials, sweep_mu
from .outputs import coerce_field, load_config_file, write_outputs, write_sweep_csv, write_trace_csv


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value file or JSON object; flags override it")
    p.add_argument("--N", type=int, dest="N")
    p.add_argument("--snr-db", type=float, dest="snr_db")
    p.add_argument("--mu", type=float)
    p.add_argument("--theta", help="two values, e.g. '0.99,0.99'")
    p.add_argument("--omega", help="two positive values summing to 1")
    p.add_argument("--kappa", type=float)
    p.add_argument("--case", choices=CASES)
    p.add_argument("--model", choices=MODELS)
    p.add_argument("--trials", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--rng-seed", type=int, dest="rng_seed")
    p.add_argument("--blur", help="'uniform3', 'identity', or JSON rows")
    p.add_argument("--boundary", choices=("reflect", "zero"))
    p.add_argument("--output-dir", "-o", dest="output_dir")
    p.add_argument("--jobs", type=int, help="worker processes for trials")


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    values = load_config_file(args.config) if args.config else {}
    for name in ExperimentConfig.__dataclass_fields__:
        v = getattr(args, name, None)
        if v is not None:
            values[name] = coerce_field(name, v)
    return ExperimentConfig(**values)


def _cmd_demo(cfg: ExperimentConfig) -> int:
    s = run_trials(cfg)
    for path in write_outputs(s, cfg.output_dir):
        print(f"wrote {path}")
    print(f"{cfg.model}/{cfg.case} mu={cfg.effective_mu:g}: MSE = {s.mse:.6g} (stderr {s.stderr:.2g})")
    return 0


def _cmd_sweep(cfg: ExperimentConfig, grid) -> int:
    rows, best = sweep_mu(cfg, grid)
    path = write_sweep_csv(rows, Path(cfg.output_dir) / "sweep.csv")
    for r in rows:
        print(f"{r.model:7s} {r.case:8s} mu={r.mu:<10g} MSE={r.mse:.6g}")
    print(f"argmin mu = {best:g}\nwrote {path}")
    return 0


def _cmd_compare(cfg: ExperimentConfig) -> int:
    results = compare(cfg)
    out = Path(cfg.output_dir)
    rows = []
    for (model, case), s in results.items():
        rows.append(SweepRow(model, case, s.config.effective_mu, s.mse, s.stderr))
        write_trace_csv(s, out / f"trace_{model}_{case}.csv")
        print(f"{model:7s} {case:8s} mu={s.config.effective_mu:<8g} MSE={s.mse:.6g} (stderr {s.stderr:.2g})")
    print(f"wrote {write_sweep_csv(rows, out / 'sweep.csv')}")
    return 0


def _cmd_certify(cfg: ExperimentConfig, tol: float) -> int:
    problem = build_model(cfg, certify=False)
    cert = check_overall_convexity(problem.A, problem.L, problem.B, problem.mu, tol)
    print(f"model={cfg.model} N={cfg.N} mu={problem.mu:g} theta={cfg.theta} omega={cfg.omega}")
    print(cert)
    return 0 if cert.passed else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="cligme", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("demo", help="one model/case: images and SE trace")
    _add_config_flags(p)
    p = sub.add_parser("sweep", help="MSE over a grid of mu values")
    _add_config_flags(p)
    p.add_argument("--mu-grid", required=True, help="comma-separated mu values")
    p = sub.add_parser("compare", help="all four constraint cases for both models")
    _add_config_flags(p)
    p = sub.add_parser("certify", help="print the overall-convexity certificate")
    _add_config_flags(p)
    p.add_argument("--tol", type=float, default=1e-9)

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = config_from_args(args)
    except (KeyError, ValueError, OSError) as e:
        parser.error(str(e))
    if args.command == "demo":
        return _cmd_demo(cfg)
    if args.command == "sweep":
        grid = np.array([float(v) for v in args.mu_grid.split(",") if v.strip()])
        return _cmd_sweep(cfg, grid)
    if args.command == "compare":
        return _cmd_compare(cfg)
    return _cmd_certify(cfg, args.tol)


if __name__ == "__main__":
    sys.exit(main())
