"""Command-line interface: ``empscen {extract,bench,portfolio}``.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
Every subcommand accepts ``--config FILE`` holding ``key = value`` lines whose
keys are the long option names (dashes or underscores); command-line flags
take precedence over file values.
"""
from __future__ import annotations

import argparse
import csv
import os
import platform
import sys
import time

import numpy as np
import scipy

from . import __version__
from .baselines import extract_ghtp, extract_lasserre, extract_maxvol
from .bench import ALGORITHMS, CASES, build_grid, run_benchmark
from .errors import ConfigError, ScenarioError
from .extractors import covariance_scenarios, extract_scenarios
from .io import read_panel, scenario_document, write_json, write_scenarios_csv
from .moments import moment_matrix, relative_error, vandermonde
from .portfolio import CELL_FIELDS, FORMATS, PortfolioConfig, load_returns, run_study
from .weights import AdmmConfig

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2
SYNTHETIC_TRAIN, SYNTHETIC_TEST, FILE_TRAIN = 2000, 1000, 10000


def _int_list(text):
    try:
        return tuple(int(v) for v in str(text).split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text):
    try:
        return tuple(float(v) for v in str(text).split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _name_list(text):
    return tuple(v.strip() for v in str(text).split(",") if v.strip())


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return value


def _add_common(parser):
    parser.add_argument("--config", help="key = value file; flags override its entries")
    parser.add_argument("--seed", type=int, default=0, help="master seed for all randomness")
    parser.add_argument("--output", help="output path prefix (suffixes .csv / .json are added)")


def _add_admm(parser):
    group = parser.add_argument_group("weight retrieval (ADMM)")
    group.add_argument("--admm-rho", type=float, default=AdmmConfig.rho)
    group.add_argument("--admm-max-iter", type=_positive_int, default=AdmmConfig.max_iter)
    group.add_argument("--admm-tol", type=float, default=AdmmConfig.primal_tol,
                       help="primal and dual residual tolerance")
    group.add_argument("--no-admm-polish", action="store_true", help="skip the active-set polish")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="empscen",
                                     description="Moment-matching scenario extraction.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    ex = sub.add_parser("extract", help="extract scenarios from a sample panel CSV")
    ex.add_argument("input", nargs="?", help="headerless CSV, one observation per row")
    ex.add_argument("--algo", choices=ALGORITHMS, default="omp")
    ex.add_argument("--q", type=int, default=1, help="half of the matched moment degree")
    ex.add_argument("--tol", type=float, default=1e-12, help="OMP / GHTP residual tolerance")
    ex.add_argument("--max-iter", type=_positive_int, default=None,
                    help="selection iteration cap (default: basis size)")
    _add_common(ex)
    _add_admm(ex)

    be = sub.add_parser("bench", help="Gaussian-mixture benchmark sweep")
    be.add_argument("--dims", type=_int_list, default=(2, 5, 10))
    be.add_argument("--clusters", type=_int_list, default=(5,))
    be.add_argument("--q", type=_int_list, default=(1,))
    be.add_argument("--algos", type=_name_list, default=ALGORITHMS)
    be.add_argument("--cases", type=_int_list, default=(1,),
                    help="case ids: " + ", ".join(f"{k}={v[0]}/{v[1]}" for k, v in CASES.items()))
    be.add_argument("--reps", type=_positive_int, default=5)
    be.add_argument("--n-samples", type=_positive_int, default=2000)
    be.add_argument("--tol", type=float, default=1e-12)
    be.add_argument("--workers", type=_positive_int, default=1)
    _add_common(be)
    _add_admm(be)

    po = sub.add_parser("portfolio", help="CVaR portfolio backtest on extracted scenarios")
    po.add_argument("--input", help="returns file; synthetic data when omitted")
    po.add_argument("--format", choices=FORMATS, default="famafrench_csv")
    po.add_argument("--train-size", type=_positive_int, default=None,
                    help=f"default {SYNTHETIC_TRAIN} synthetic, {FILE_TRAIN} with a file")
    po.add_argument("--test-size", type=_positive_int, default=SYNTHETIC_TEST,
                    help="synthetic mode only; with a file the remainder is the test set")
    po.add_argument("--assets", type=_positive_int, default=25, help="synthetic dimension")
    po.add_argument("--alphas", type=_float_list, default=(0.95, 0.98, 0.99))
    po.add_argument("--delta-levels", type=_float_list, default=(0.95, 0.98, 0.99),
                    help="levels at which the naive portfolio CVaR sets the caps")
    po.add_argument("--delta", type=float, default=None, help="fixed cap for every cell")
    po.add_argument("--q", type=int, default=1)
    po.add_argument("--tol", type=float, default=1e-12)
    po.add_argument("--max-iter", type=_positive_int, default=None)
    po.add_argument("--simulations", type=_positive_int, default=10)
    po.add_argument("--workers", type=_positive_int, default=1)
    _add_common(po)
    _add_admm(po)
    return parser


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; blank lines and ``#`` comments are ignored."""
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    entries = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep or not key.strip():
                raise ConfigError(f"{path}: line {lineno}: expected 'key = value'")
            entries[key.strip().replace("-", "_")] = value.strip()
    return entries


def _subparser(parser, command):
    action = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    return action.choices[command]


def parse_args(argv) -> argparse.Namespace:
    """Parse flags, then layer a config file underneath them."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.config:
        return args
    sub = _subparser(parser, args.command)
    actions = {a.dest: a for a in sub._actions if a.dest not in ("help", "config")}
    entries = read_config_file(args.config)
    unknown = sorted(set(entries) - set(actions))
    if unknown:
        raise ConfigError(f"unknown config keys for {args.command}: {', '.join(unknown)}")
    defaults = {}
    for key, text in entries.items():
        action = actions[key]
        if isinstance(action, argparse._StoreTrueAction):
            if text.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ConfigError(f"config key {key} expects a boolean, got {text!r}")
            defaults[key] = text.lower() in ("true", "1", "yes")
            continue
        try:
            value = action.type(text) if action.type else text
        except (argparse.ArgumentTypeError, ValueError) as exc:
            raise ConfigError(f"config key {key}: {exc}") from None
        if action.choices is not None and value not in action.choices:
            raise ConfigError(f"config key {key}: {value!r} not in {list(action.choices)}")
        defaults[key] = value
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def admm_config(args) -> AdmmConfig:
    try:
        return AdmmConfig(rho=args.admm_rho, max_iter=args.admm_max_iter,
                          primal_tol=args.admm_tol, dual_tol=args.admm_tol,
                          polish=not args.no_admm_polish)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def run_metadata(args) -> dict:
    """Everything needed to rerun a command apart from timings."""
    settings = {k: v for k, v in vars(args).items() if k != "command"}
    return {
        "package": "empscen",
        "version": __version__,
        "command": args.command,
        "seed": args.seed,
        "settings": settings,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


def _require_file(path, what):
    if path is None:
        raise ConfigError(f"{what} is required")
    if not os.path.isfile(path):
        raise ConfigError(f"input file not found: {path}")


def _output_prefix(args, fallback):
    prefix = args.output or fallback
    directory = os.path.dirname(os.path.abspath(prefix))
    if not os.path.isdir(directory):
        raise ConfigError(f"output directory does not exist: {directory}")
    return prefix


def cmd_extract(args) -> int:
    _require_file(args.input, "input panel")
    if args.q < 1:
        raise ConfigError("--q must be >= 1")
    if args.algo == "covariance" and args.q != 1:
        raise ConfigError("covariance scenarios are only defined for q = 1")
    prefix = _output_prefix(args, os.path.splitext(args.input)[0] + ".scenarios")
    cfg = admm_config(args)
    x = read_panel(args.input)
    start = time.perf_counter()
    trace = None
    if args.algo == "covariance":
        scen = covariance_scenarios(moment_matrix(x, 1))
    elif args.algo == "omp":
        scen, trace = extract_scenarios(x, args.q, args.tol, args.max_iter, cfg)
    elif args.algo == "maxvol":
        scen = extract_maxvol(x, args.q, args.max_iter, weight_config=cfg)
    elif args.algo == "ghtp":
        scen = extract_ghtp(x, args.q, args.tol, args.max_iter, weight_config=cfg)
    else:
        scen = extract_lasserre(x, args.q, seed=args.seed, weight_config=cfg)
    elapsed = time.perf_counter() - start
    error = relative_error(moment_matrix(x, args.q), vandermonde(scen.points, args.q), scen.weights)
    write_scenarios_csv(prefix + ".csv", scen)
    doc = scenario_document(scen, trace)
    doc["relative_error"] = error
    doc["n_samples"] = x.shape[0]
    doc["wall_time_seconds"] = elapsed
    doc["run"] = run_metadata(args)
    write_json(prefix + ".json", doc)
    print(f"{len(scen)} {args.algo} scenarios, relative error {error:.3e}: {prefix}.csv")
    return EXIT_OK


def cmd_bench(args) -> int:
    if min(args.q) < 1:
        raise ConfigError("--q values must be >= 1")
    unknown = [a for a in args.algos if a not in ALGORITHMS]
    if unknown:
        raise ConfigError(f"unknown algorithms {unknown}; choose from {list(ALGORITHMS)}")
    if "covariance" in args.algos and any(q != 1 for q in args.q):
        raise ConfigError("covariance scenarios are only defined for q = 1")
    prefix = _output_prefix(args, "bench")
    grid = build_grid(dims=args.dims, clusters=args.clusters, qs=args.q, algorithms=args.algos,
                      cases=args.cases, reps=args.reps, n_samples=args.n_samples, seed=args.seed)
    meta = run_metadata(args)
    meta["eigenvalue_sampling"] = "N(1,1) with non-positive draws resampled"
    meta["mixing_proportions"] = "normalized uniform draws"
    records = run_benchmark(grid, prefix, workers=args.workers, tolerance=args.tol,
                            weight_config=admm_config(args), metadata=meta)
    failed = sum(r.status == "failed" for r in records)
    print(f"{len(records)} records ({failed} failed cells): {prefix}.csv, {prefix}.json")
    return EXIT_OK


def _write_cells_csv(path, simulations):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CELL_FIELDS, extrasaction="ignore")
        writer.writeheader()
        for cells in simulations:
            for cell in cells:
                writer.writerow({k: ("" if cell.get(k) is None else cell.get(k)) for k in CELL_FIELDS})


def cmd_portfolio(args) -> int:
    source = None
    if args.input is not None:
        _require_file(args.input, "returns file")
    if args.q < 1:
        raise ConfigError("--q must be >= 1")
    prefix = _output_prefix(args, "portfolio")
    try:
        config = PortfolioConfig(alphas=args.alphas, delta_levels=args.delta_levels, q=args.q,
                                 tolerance=args.tol, max_iter=args.max_iter,
                                 admm=admm_config(args))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if args.input is not None:
        source = load_returns(args.input, args.format)
        n_train = args.train_size or FILE_TRAIN
        if n_train >= source.n_obs:
            raise ConfigError(f"train size {n_train} leaves no test rows "
                              f"({source.n_obs} usable rows in {args.input})")
    else:
        n_train = args.train_size or SYNTHETIC_TRAIN
    study = run_study(config, source=source, n_train=n_train, n_test=args.test_size,
                      d=args.assets, simulations=args.simulations, seed=args.seed,
                      deltas=args.delta, workers=args.workers)
    first = study["simulations"][0]
    infeasible = sum(c["status"] != "optimal" for cells in study["simulations"] for c in cells)
    report = {
        "run": run_metadata(args),
        "data": {
            "source": args.input or "synthetic",
            "format": args.format if args.input else "synthetic",
            "dropped_rows": source.dropped_rows if source is not None else 0,
            "n_assets": source.n_assets if source is not None else args.assets,
        },
        "train_size": study["train_size"],
        "test_size": study["test_size"],
        "n_simulations": args.simulations,
        "cells": first,
    }
    write_json(prefix + ".json", report)
    _write_cells_csv(prefix + ".csv", study["simulations"])
    if infeasible:
        print(f"warning: {infeasible} cell(s) infeasible; see {prefix}.json", file=sys.stderr)
    print(f"{len(first)} cells x {args.simulations} simulations "
          f"(train {study['train_size']}, test {study['test_size']}): {prefix}.json")
    return EXIT_OK


COMMANDS = {"extract": cmd_extract, "bench": cmd_bench, "portfolio": cmd_portfolio}


def main(argv=None) -> int:
    try:
        args = parse_args(sys.argv[1:] if argv is None else argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    except ConfigError as exc:
        print(f"empscen: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"empscen: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ScenarioError, OSError, ValueError, np.linalg.LinAlgError) as exc:
        label = f"extract --algo {args.algo}" if args.command == "extract" else args.command
        print(f"empscen: {label} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
