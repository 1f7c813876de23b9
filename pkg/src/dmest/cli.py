"""Command-line entry point.  Every command writes CSV (header row first).

Exit codes: 0 success, 1 validation error, 2 I/O error.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import math
import sys
import warnings

import numpy as np

from . import experiments
from .analysis import budget_from_bits, mse_bounds, spread_stats
from .codec import (
    BinaryEncoder,
    FixedEncoder,
    IdentityEncoder,
    TernaryEncoder,
    TernaryParams,
    VariableEncoder,
)
from .core import DISTRIBUTIONS, BitSizes, Dataset, gen_synthetic
from .optimizer import BudgetProblem, alternating_minimize
from .simharness import RoundConfig, run_trials
from .wire import Format, WireFormat


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return "nan" if math.isnan(v) else repr(float(v))
    return str(v)


def _write_rows(out, header, rows) -> None:
    w = csv.writer(out)
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(row[h]) for h in header])


def _open_out(path):
    if path in (None, "-"):
        return contextlib.nullcontext(sys.stdout)
    return open(path, "w", newline="")


def _add_data_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", help="dataset CSV (one row per node); generated if omitted")
    p.add_argument("--dist", choices=DISTRIBUTIONS, default="gaussian")
    p.add_argument("--n", type=int, default=16)
    p.add_argument("--d", type=int, default=512)
    p.add_argument("--seed", type=int, default=0)


def _add_size_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--r", type=int, default=16, help="bits per float value")
    p.add_argument("--rbar", type=int, default=None, help="bits per node center (0 or r; default r)")
    p.add_argument("--rseed", type=int, default=64, help="bits per seed")


def _sizes(args) -> BitSizes:
    return BitSizes(args.r, args.r if args.rbar is None else args.rbar, args.rseed)


def _dataset(args) -> Dataset:
    if args.data:
        return Dataset.from_csv(args.data)
    return gen_synthetic(args.dist, args.n, args.d, args.seed)


def cmd_gen(args) -> None:
    ds = gen_synthetic(args.dist, args.n, args.d, args.seed)
    if args.out in (None, "-"):
        for row in ds.values:
            sys.stdout.write(",".join(repr(float(v)) for v in row) + "\n")
    else:
        ds.to_csv(args.out)


def cmd_table1(args) -> None:
    ds = _dataset(args)
    rows = experiments.table1(ds.values, _sizes(args), args.trials, args.seed)
    with _open_out(args.out) as out:
        _write_rows(out, experiments.TABLE1_HEADER, rows)


def cmd_curve(args) -> None:
    ds = _dataset(args)
    if args.budgets:
        budgets = np.array(sorted(float(b) for b in args.budgets.split(",")))
        if np.any(budgets <= 0):
            raise ValueError("budgets must be positive")
    else:
        budgets = experiments.default_budgets(ds.values, args.points)
    strategies = args.strategy or list(experiments.STRATEGIES)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rows = experiments.curve(ds.values, budgets, strategies, _sizes(args), args.trials, args.seed)
    with _open_out(args.out) as out:
        _write_rows(out, experiments.CURVE_HEADER, rows)


def cmd_optimize(args) -> None:
    ds = _dataset(args)
    X = ds.values
    n, d = X.shape
    sizes = _sizes(args)
    if (args.budget_B is None) == (args.budget_bits is None):
        raise ValueError("give exactly one of --budget-B and --budget-bits")
    B = args.budget_B if args.budget_B is not None else budget_from_bits(args.budget_bits, n, d, sizes)
    if B <= 0:
        raise ValueError("budget leaves nothing for the probabilities")
    sol = alternating_minimize(BudgetProblem(X, B, args.mode), tol=args.tol, max_iters=args.max_iters)
    stats = spread_stats(X, sol.centers)
    B_eff = min(B, stats.support_size)
    lower, upper, exact = mse_bounds(stats, B_eff) if stats.support_size else (0.0, 0.0, 0.0)
    summary = sol.summary() | {"B": B_eff, "lower": lower, "upper": upper, "exact": exact}
    print(f"B={B_eff!r} mse={sol.objective!r} lower={lower!r} upper={upper!r} exact={exact!r} "
          f"iterations={sol.iterations} converged={sol.converged}")
    if args.out:
        with open(args.out + ".csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["node", "coord", "p"])
            for (i, j), p in np.ndenumerate(sol.probs):
                w.writerow([i, j, repr(float(p))])
        with open(args.out + ".json", "w") as fh:
            json.dump(summary | {"centers": sol.centers.tolist()}, fh, indent=2)


def _encoder(args, X):
    if args.encoder == "identity":
        return IdentityEncoder(), None
    if args.encoder == "variable":
        if args.p is None:
            raise ValueError("--p is required for the variable encoder")
        seeded = Format.parse(args.format) == Format.SPARSE_SEEDED
        return VariableEncoder.uniform(X, args.p, seeded=seeded), (args.p if seeded else None)
    if args.encoder == "fixed":
        if args.k is None:
            raise ValueError("--k is required for the fixed encoder")
        return FixedEncoder.row_mean(X, args.k), None
    if args.encoder == "binary":
        return BinaryEncoder(), None
    if args.encoder == "ternary":
        return TernaryEncoder(TernaryParams.uniform(X, args.p_lo, args.p_hi)), None
    raise ValueError(f"unknown encoder {args.encoder!r}")


def cmd_simulate(args) -> None:
    X = _dataset(args).values
    encoder, seeded_p = _encoder(args, X)
    fmt = WireFormat(Format.parse(args.format), _sizes(args), seeded_p)
    report = run_trials(X, RoundConfig(encoder, fmt, args.trials, args.seed))
    if args.out:
        report.write_csv(args.out)
    else:
        report_rows = [dict(zip(report.CSV_HEADER, row)) for row in report.rows]
        _write_rows(sys.stdout, report.CSV_HEADER, report_rows)
    print(f"mean_sq_error={report.mean_sq_error!r} mean_bits_total={report.mean_bits_total!r} "
          f"min_bits={report.min_bits} max_bits={report.max_bits} trials={report.trials}",
          file=sys.stderr if not args.out else sys.stdout)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dmest", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic dataset")
    p.add_argument("--dist", choices=DISTRIBUTIONS, default="gaussian")
    p.add_argument("--n", type=int, default=16)
    p.add_argument("--d", type=int, default=512)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("table1", help="uniform-probability cost/MSE table")
    _add_data_args(p)
    _add_size_args(p)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--out")
    p.set_defaults(func=cmd_table1)

    p = sub.add_parser("curve", help="cost/MSE trade-off curves")
    _add_data_args(p)
    _add_size_args(p)
    p.add_argument("--budgets", help="comma-separated budgets B on the probability sum")
    p.add_argument("--points", type=int, default=10, help="log-spaced budgets when --budgets is omitted")
    p.add_argument("--strategy", action="append", choices=experiments.STRATEGIES)
    p.add_argument("--trials", type=int, default=200, help="Monte Carlo trials per point (0 to skip)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("optimize", help="optimal probabilities (and centers) for a budget")
    _add_data_args(p)
    _add_size_args(p)
    p.add_argument("--budget-B", dest="budget_B", type=float)
    p.add_argument("--budget-bits", dest="budget_bits", type=float)
    p.add_argument("--mode", choices=("fixed", "free"), default="free")
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--max-iters", type=int, default=100)
    p.add_argument("--out", help="output prefix for <out>.csv and <out>.json")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("simulate", help="end-to-end rounds with bit accounting")
    _add_data_args(p)
    _add_size_args(p)
    p.add_argument("--encoder", choices=("identity", "variable", "fixed", "binary", "ternary"), default="variable")
    p.add_argument("--p", type=float)
    p.add_argument("--k", type=int)
    p.add_argument("--p-lo", dest="p_lo", type=float, default=0.25)
    p.add_argument("--p-hi", dest="p_hi", type=float, default=0.25)
    p.add_argument("--format", default="sparse_indexed",
                   help="naive, varying_length, sparse_indexed, sparse_seeded or binary")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
