"""Closed-form MSE, Monte Carlo estimation and budget bounds."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .codec import (
    BinaryEncoder,
    Encoder,
    FixedEncoder,
    IdentityEncoder,
    RotatedEncoder,
    TernaryEncoder,
    TernaryParams,
    VariableEncoder,
    binary_params,
)
from .core import BitSizes, as_matrix, derive_seeds, index_bits


@dataclass(frozen=True)
class MseReport:
    closed_form: float
    empirical: float
    trials: int
    std_error: float

    CSV_HEADER = ("closed_form", "empirical", "trials", "std_error")

    def csv_row(self) -> list:
        return [repr(self.closed_form), repr(self.empirical), self.trials, repr(self.std_error)]

    @property
    def z_score(self) -> float:
        gap = abs(self.empirical - self.closed_form)
        if self.std_error == 0:
            return 0.0 if gap == 0 else float("inf")
        return gap / self.std_error


def _deviations(X, centers) -> np.ndarray:
    X = as_matrix(X)
    centers = np.asarray(centers, dtype=np.float64).reshape(-1)
    return X - centers[:, None]


def mse_closed_variable(X, probs, centers) -> float:
    """(1/n^2) sum (1/p - 1) (X_ij - mu_i)^2, skipping entries equal to their center."""
    dev = _deviations(X, centers)
    probs = np.broadcast_to(np.asarray(probs, dtype=np.float64), dev.shape)
    active = dev != 0
    if np.any(probs[active] <= 0):
        raise ValueError("zero probability on an entry that differs from its center")
    n = dev.shape[0]
    terms = (1.0 / probs[active] - 1.0) * dev[active] ** 2
    return float(terms.sum() / n**2)


def mse_closed_fixed(X, k: int, centers) -> float:
    dev = _deviations(X, centers)
    n, d = dev.shape
    if not 1 <= k <= d:
        raise ValueError(f"need 1 <= k <= d, got k={k}")
    return float((d - k) / k * np.sum(dev**2) / n**2)


def mse_closed_binary(X) -> float:
    probs, centers = binary_params(X)
    return mse_closed_variable(X, probs, centers)


def ternary_moments(X, params: TernaryParams) -> tuple[np.ndarray, np.ndarray]:
    """Exact per-entry mean and variance of the three-level encoder."""
    X = as_matrix(X)
    p_lo = np.broadcast_to(params.p_lo, X.shape)
    p_hi = np.broadcast_to(params.p_hi, X.shape)
    if np.any(p_lo + p_hi >= 1):
        raise ValueError("ternary probabilities must satisfy p_lo + p_hi < 1")
    lo = params.lo[:, None]
    hi = params.hi[:, None]
    p_rest = 1.0 - p_lo - p_hi
    rest = (X - p_lo * lo - p_hi * hi) / p_rest
    mean = p_lo * lo + p_hi * hi + p_rest * rest
    var = p_lo * (lo - mean) ** 2 + p_hi * (hi - mean) ** 2 + p_rest * (rest - mean) ** 2
    return mean, var


def mse_closed_ternary(X, params: TernaryParams) -> float:
    """Sum of exact per-entry variances over n^2.

    Note: the expression p'(X-lo)^2 + p''(X-hi)^2 + (p' lo + p'' hi)^2 that is
    sometimes quoted for this encoder is not its variance; on X=1, lo=0, hi=2,
    p'=p''=1/4 it gives 0.75 while the true value is 0.5.
    """
    _, var = ternary_moments(X, params)
    n = var.shape[0]
    return float(var.sum() / n**2)


def closed_form(encoder: Encoder, X) -> float:
    """Closed-form MSE of an encoder under the averaging decoder."""
    X = as_matrix(X)
    if isinstance(encoder, IdentityEncoder):
        return 0.0
    if isinstance(encoder, VariableEncoder):
        return mse_closed_variable(X, encoder.probs, encoder.centers)
    if isinstance(encoder, FixedEncoder):
        return mse_closed_fixed(X, encoder.k, encoder.centers)
    if isinstance(encoder, BinaryEncoder):
        return mse_closed_binary(X)
    if isinstance(encoder, TernaryEncoder):
        return mse_closed_ternary(X, encoder.params)
    if isinstance(encoder, RotatedEncoder):
        # rotation is orthogonal, so the error in the rotated domain is preserved
        return closed_form(encoder.inner, encoder.rotate_data(X))
    raise TypeError(f"no closed form for {type(encoder).__name__}")


def mse_empirical(X, encoder: Encoder, trials: int, seed: int, closed: float | None = None,
                  chunk_elements: int = 2_000_000) -> MseReport:
    """Monte Carlo MSE over ``trials`` independent encode/average rounds."""
    if trials < 100:
        raise ValueError("mse_empirical needs at least 100 trials")
    X = as_matrix(X)
    n, d = X.shape
    target = X.mean(axis=0)
    seeds = derive_seeds(seed, trials)
    chunk = max(1, chunk_elements // (n * d))
    errors = np.empty(trials)
    for start in range(0, trials, chunk):
        Y = encoder.sample(X, seeds[start : start + chunk])
        estimate = encoder.postprocess(Y.mean(axis=1))
        errors[start : start + chunk] = np.sum((estimate - target) ** 2, axis=-1)
    if closed is None:
        closed = closed_form(encoder, X)
    return MseReport(float(closed), float(errors.mean()), trials, float(errors.std(ddof=1) / np.sqrt(trials)))


# ---------------------------------------------------------------------------
# Spread statistics and budget bounds
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpreadStats:
    R: float
    W: float
    a: np.ndarray = field(repr=False)
    S: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.a.shape[0]

    @property
    def support_size(self) -> int:
        return int(self.S.sum())

    @property
    def max_a(self) -> float:
        return float(self.a.max()) if self.a.size else 0.0


def spread_stats(X, centers) -> SpreadStats:
    dev = _deviations(X, centers)
    a = np.abs(dev)
    n = dev.shape[0]
    return SpreadStats(R=float(np.sum(dev**2) / n), W=float(a.sum()), a=a, S=dev != 0)


def mse_bounds(stats: SpreadStats, B: float, n: int | None = None) -> tuple[float, float, float | None]:
    """(lower, upper, exact) on the optimal MSE for budget B on sum p_ij.

    ``exact`` is the closed-form optimum when no probability needs clamping
    (B <= W / max a), else None.
    """
    n = stats.n if n is None else n
    size = stats.support_size
    if not 0 < B <= size:
        raise ValueError(f"budget must satisfy 0 < B <= |S| = {size}, got {B}")
    lower = (1.0 / B - 1.0) * stats.R / n
    upper = (size / B - 1.0) * stats.R / n
    exact = None
    if B <= stats.W / stats.max_a:
        exact = stats.W**2 / (n**2 * B) - stats.R / n
    return lower, upper, exact


def budget_cost(B: float, n: int, d: int, sizes: BitSizes) -> float:
    """Expected indexed-sparse bits when the probabilities sum to B."""
    return float(n * sizes.r_bar + (index_bits(d) + sizes.r) * B)


def budget_from_bits(bits: float, n: int, d: int, sizes: BitSizes) -> float:
    return max(0.0, (bits - n * sizes.r_bar) / (index_bits(d) + sizes.r))
