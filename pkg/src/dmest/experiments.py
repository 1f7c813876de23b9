"""Table and trade-off curve generation on top of the analysis and optimizer layers."""

from __future__ import annotations

import math
import warnings

import numpy as np

from .analysis import (
    budget_cost,
    mse_closed_binary,
    mse_closed_variable,
    mse_empirical,
    spread_stats,
)
from .codec import BinaryEncoder, VariableEncoder
from .core import BitSizes, as_matrix, index_bits
from .optimizer import BudgetProblem, alternating_minimize
from .wire import Format, WireFormat, expected_cost

STRATEGIES = (
    "uniform_p_row_mean_centers",
    "optimal_p_row_mean_centers",
    "optimal_p_optimal_centers",
    "binary_quantization_point",
)

TABLE1_HEADER = ("p", "expected_cost_bits", "closed_mse", "empirical_mse", "std_error")
CURVE_HEADER = ("strategy", "B", "cost_bits", "closed_mse", "empirical_mse", "std_error", "note")


def table1_probabilities(d: int, r: int) -> list[float]:
    return [1.0, 1.0 / math.log2(d), 1.0 / r, 1.0 / d]


def _empirical(X, encoder, closed, trials, seed):
    if trials <= 0:
        return math.nan, math.nan
    rep = mse_empirical(X, encoder, trials, seed, closed=closed)
    return rep.empirical, rep.std_error


def table1(X, sizes: BitSizes = BitSizes(), trials: int = 1000, seed: int = 0) -> list[dict]:
    """Uniform-p rows with row-mean centers, costed with the seeded sparse format."""
    X = as_matrix(X)
    n, d = X.shape
    fmt = WireFormat(Format.SPARSE_SEEDED, sizes)
    rows = []
    for p in table1_probabilities(d, sizes.r):
        enc = VariableEncoder.uniform(X, p)
        closed = mse_closed_variable(X, enc.probs, enc.centers)
        emp, se = _empirical(X, enc, closed, trials, seed)
        rows.append({
            "p": p,
            "expected_cost_bits": expected_cost(fmt, n, d, probs=enc.probs),
            "closed_mse": closed,
            "empirical_mse": emp,
            "std_error": se,
        })
    return rows


def default_budgets(X, points: int = 10) -> np.ndarray:
    """Log-spaced budgets from 1 up to |S| under row-mean centers."""
    X = as_matrix(X)
    size = spread_stats(X, X.mean(axis=1)).support_size
    return np.geomspace(1.0, max(size, 1), points)


def strategy_params(X, strategy: str, B: float) -> VariableEncoder:
    X = as_matrix(X)
    centers = X.mean(axis=1)
    if strategy == "uniform_p_row_mean_centers":
        S = X != centers[:, None]
        size = int(S.sum())
        probs = np.where(S, B / size, 0.0) if size else np.ones_like(X)
        return VariableEncoder(probs, centers)
    if strategy == "optimal_p_row_mean_centers":
        return alternating_minimize(BudgetProblem(X, B, "fixed", centers)).params
    if strategy == "optimal_p_optimal_centers":
        return alternating_minimize(BudgetProblem(X, B, "free")).params
    raise ValueError(f"unknown strategy {strategy!r}")


def curve(X, budgets, strategies=STRATEGIES, sizes: BitSizes = BitSizes(), trials: int = 0,
          seed: int = 0) -> list[dict]:
    """Cost/MSE points per budget and strategy.

    Budgets beyond |S| (row-mean centers) are clipped and flagged with a
    ``clipped`` note.  The binary quantization strategy yields a single point.
    """
    X = as_matrix(X)
    n, d = X.shape
    size = spread_stats(X, X.mean(axis=1)).support_size
    rows = []
    for strategy in strategies:
        if strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {strategy!r}")
        if strategy == "binary_quantization_point":
            closed = mse_closed_binary(X)
            emp, se = _empirical(X, BinaryEncoder(), closed, trials, seed)
            cost = expected_cost(WireFormat(Format.BINARY, sizes), n, d)
            rows.append({"strategy": strategy, "B": math.nan, "cost_bits": cost, "closed_mse": closed,
                         "empirical_mse": emp, "std_error": se, "note": ""})
            continue
        for B in budgets:
            note = ""
            if B > size:
                warnings.warn(f"budget {B} exceeds |S| = {size}; clipped")
                B, note = float(size), "clipped"
            enc = strategy_params(X, strategy, float(B))
            closed = mse_closed_variable(X, enc.probs, enc.centers)
            emp, se = _empirical(X, enc, closed, trials, seed)
            rows.append({"strategy": strategy, "B": float(B), "cost_bits": budget_cost(B, n, d, sizes),
                         "closed_mse": closed, "empirical_mse": emp, "std_error": se, "note": note})
    return rows


def epsilon_config(X, eps: float, r: int = 16) -> tuple[VariableEncoder, WireFormat]:
    """Sub-bit configuration: zero centers sent with no bits, uniform p = eps / (d (ceil log2 d + r)).

    The expected indexed-sparse payload is then n * eps bits in total.
    """
    X = as_matrix(X)
    n, d = X.shape
    p = eps / (d * (index_bits(d) + r))
    if not 0 < p <= 1:
        raise ValueError("eps gives a probability outside (0, 1]")
    enc = VariableEncoder.uniform(X, p, centers=np.zeros(n))
    return enc, WireFormat(Format.SPARSE_INDEXED, BitSizes(r=r, r_bar=0))
