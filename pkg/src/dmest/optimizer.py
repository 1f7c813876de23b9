"""Choosing keep-probabilities and node centers under a budget on sum p_ij."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .analysis import mse_closed_variable
from .codec import VariableEncoder
from .core import as_matrix


def water_fill(a, B: float) -> tuple[np.ndarray, float]:
    """Minimise sum a_ij^2 / p_ij subject to sum p_ij = B, 0 <= p_ij <= 1.

    Returns ``(p, theta)`` with ``p = min(1, a / theta)``.  Entries with
    ``a == 0`` get ``p = 0``.  Requires ``0 < B <= #{a > 0}``; at the upper
    end every positive entry gets probability 1 and theta is 0.
    """
    a = np.asarray(a, dtype=np.float64)
    if np.any(a < 0) or not np.all(np.isfinite(a)):
        raise ValueError("deviations must be finite and non-negative")
    flat = a.reshape(-1)
    active = np.flatnonzero(flat > 0)
    m = active.size
    if not 0 < B <= m:
        raise ValueError(f"budget must satisfy 0 < B <= |S| = {m}, got {B}")
    p = np.zeros_like(flat)
    if B == m:
        p[active] = 1.0
        return p.reshape(a.shape), 0.0

    # stable sort: among equal deviations the lower flat index is clamped first
    order = active[np.argsort(-flat[active], kind="stable")]
    srt = flat[order]
    tail = np.cumsum(srt[::-1])[::-1]
    clamped = np.arange(m)
    room = B - clamped
    ok = room > 0
    theta = np.full(m, np.inf)
    theta[ok] = tail[ok] / room[ok]
    c = int(np.flatnonzero(ok & (srt <= theta))[0])
    th = float(theta[c])
    p[order[:c]] = 1.0
    p[order[c:]] = np.minimum(1.0, srt[c:] / th)
    return p.reshape(a.shape), th


def optimal_probs_given_centers(a, B: float) -> np.ndarray:
    return water_fill(a, B)[0]


def optimal_centers_given_probs(X, probs) -> np.ndarray:
    """Weighted row means with weights 1/p - 1.

    A zero probability acts as an infinite weight and pins the center to that
    entry's value; rows with all p = 1 fall back to the arithmetic mean.
    """
    X = as_matrix(X)
    probs = np.broadcast_to(np.asarray(probs, dtype=np.float64), X.shape)
    centers = X.mean(axis=1)
    with np.errstate(divide="ignore"):
        w = np.where(probs > 0, 1.0 / probs - 1.0, np.inf)
    for i in range(X.shape[0]):
        pinned = np.flatnonzero(np.isinf(w[i]))
        if pinned.size:
            centers[i] = X[i, pinned[0]]
            continue
        total = w[i].sum()
        if total > 0:
            centers[i] = np.dot(w[i], X[i]) / total
    return centers


@dataclass
class BudgetProblem:
    X: np.ndarray
    B: float
    centers_mode: str = "free"  # "fixed" or "free"
    centers: np.ndarray | None = None  # used when fixed; defaults to row means
    per_node: np.ndarray | None = None

    def __post_init__(self):
        self.X = as_matrix(self.X)
        n, d = self.X.shape
        if self.centers_mode not in ("fixed", "free"):
            raise ValueError("centers_mode must be 'fixed' or 'free'")
        if not 0 < self.B <= n * d:
            raise ValueError(f"budget must satisfy 0 < B <= n*d = {n * d}")
        if self.per_node is not None:
            self.per_node = np.asarray(self.per_node, dtype=np.float64)
            if self.per_node.shape != (n,) or not np.isclose(self.per_node.sum(), self.B, rtol=1e-12):
                raise ValueError("per-node budgets must have one entry per node and sum to B")


@dataclass
class Solution:
    params: VariableEncoder
    objective: float
    iterations: int
    converged: bool
    history: list[float] = field(default_factory=list)

    @property
    def probs(self) -> np.ndarray:
        return self.params.probs

    @property
    def centers(self) -> np.ndarray:
        return self.params.centers

    def summary(self) -> dict:
        return {"objective": self.objective, "iterations": self.iterations, "converged": self.converged}


def _probability_step(X, centers, B):
    a = np.abs(X - centers[:, None])
    size = int(np.count_nonzero(a))
    if size == 0:
        return np.ones_like(a)
    return optimal_probs_given_centers(a, min(B, size))


def alternating_minimize(problem: BudgetProblem, tol: float = 1e-9, max_iters: int = 100) -> Solution:
    """Alternate exact center and probability updates until the objective stalls.

    ``history`` records the objective after every half-step; it is
    non-increasing.  Budgets above the number of non-zero deviations are
    clipped (all such entries are then kept with probability 1).
    """
    if tol <= 0 or max_iters < 1:
        raise ValueError("need tol > 0 and max_iters >= 1")
    X = problem.X
    if problem.centers_mode == "fixed" and problem.centers is not None:
        centers = np.asarray(problem.centers, dtype=np.float64).reshape(-1).copy()
    else:
        centers = X.mean(axis=1)
    probs = _probability_step(X, centers, problem.B)
    objective = mse_closed_variable(X, probs, centers)
    history = [objective]
    if problem.centers_mode == "fixed":
        return Solution(VariableEncoder(probs, centers), objective, 1, True, history)

    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        previous = objective
        centers = optimal_centers_given_probs(X, probs)
        history.append(mse_closed_variable(X, probs, centers))
        probs = _probability_step(X, centers, problem.B)
        objective = mse_closed_variable(X, probs, centers)
        history.append(objective)
        if previous - objective <= tol * max(previous, np.finfo(float).tiny):
            converged = True
            break
    return Solution(VariableEncoder(probs, centers), objective, it, converged, history)


def per_node_split(problem: BudgetProblem, tol: float = 1e-9, max_iters: int = 100) -> Solution:
    """Solve each node on its own budget B_i and assemble the joint solution."""
    if problem.per_node is None:
        raise ValueError("problem has no per-node budgets")
    X = problem.X
    probs = np.empty_like(X)
    centers = np.empty(X.shape[0])
    iterations, converged = 0, True
    for i, b in enumerate(problem.per_node):
        start = X[i].mean() if problem.centers is None else problem.centers[i]
        size = int(np.count_nonzero(X[i] - start))
        if b <= 0 or (size and b > size):
            raise ValueError(f"node {i}: budget {b} outside (0, {size}]")
        sub = BudgetProblem(
            X[i : i + 1],
            min(b, X.shape[1]),
            problem.centers_mode,
            None if problem.centers is None else np.asarray(problem.centers)[i : i + 1],
        )
        sol = alternating_minimize(sub, tol, max_iters)
        probs[i] = sol.probs[0]
        centers[i] = sol.centers[0]
        iterations = max(iterations, sol.iterations)
        converged &= sol.converged
    objective = mse_closed_variable(X, probs, centers)
    return Solution(VariableEncoder(probs, centers), objective, iterations, converged, [objective])
