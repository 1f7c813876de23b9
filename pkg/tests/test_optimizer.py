import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dmest.analysis import mse_bounds, mse_closed_variable, spread_stats
from dmest.core import gen_synthetic
from dmest.optimizer import (
    BudgetProblem,
    alternating_minimize,
    optimal_centers_given_probs,
    optimal_probs_given_centers,
    per_node_split,
    water_fill,
)

deviations = arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 6)),
                    elements=st.one_of(st.just(0.0), st.floats(1e-3, 50)))


def golden_section(f, lo, hi, tol=1e-12):
    g = (np.sqrt(5) - 1) / 2
    a, b = lo, hi
    c, d = b - g * (b - a), a + g * (b - a)
    while b - a > tol:
        if f(c) < f(d):
            b, d = d, c
            c = b - g * (b - a)
        else:
            a, c = c, d
            d = a + g * (b - a)
    return (a + b) / 2


class TestWaterFill:
    def test_uniform(self):
        p, _ = water_fill(np.full((2, 3), 2.0), 1.5)
        assert np.allclose(p, 0.25)

    def test_unclamped_example(self):
        p, theta = water_fill([3.0, 1.0], 1.0)
        assert p.tolist() == [0.75, 0.25] and theta == 4.0
        assert mse_closed_variable([[3.0, -1.0]], p[None], [0.0]) == pytest.approx(6.0, rel=1e-14)

    def test_clamped_example(self):
        p, _ = water_fill([3.0, 1.0], 1.8)
        assert p == pytest.approx([1.0, 0.8], rel=1e-15)
        grid = np.linspace(1e-3, 1.0, 1000)
        # brute force with p1 = 1 and p2 = 0.8 forced by the budget vs. free grid over the split
        objective = lambda q1: (1 / q1 - 1) * 9 + (1 / (1.8 - q1) - 1) * 1
        feasible = grid[(grid >= 0.8) & (grid <= 1.0)]
        assert min(objective(q) for q in feasible) == pytest.approx(objective(1.0))
        assert mse_closed_variable([[3.0, -1.0]], p[None], [0.0]) == pytest.approx(0.25)

    def test_zero_entries(self):
        p, _ = water_fill([[0.0, 2.0], [1.0, 0.0]], 1.0)
        assert p[0, 0] == 0 and p[1, 1] == 0

    def test_full_budget(self):
        p, theta = water_fill([0.0, 2.0, 1.0], 2)
        assert p.tolist() == [0.0, 1.0, 1.0] and theta == 0.0

    def test_range(self):
        with pytest.raises(ValueError):
            water_fill([1.0, 0.0], 1.5)
        with pytest.raises(ValueError):
            water_fill([1.0], 0)
        with pytest.raises(ValueError):
            water_fill([-1.0], 0.5)

    def test_ties_keep_objective(self):
        a = np.array([5.0, 2.0, 2.0, 2.0, 0.5])
        p, _ = water_fill(a, 2.5)
        assert p.sum() == pytest.approx(2.5)
        assert np.ptp(p[1:4]) == 0

    @settings(max_examples=300, deadline=None)
    @given(deviations, st.floats(0.01, 1.0))
    def test_kkt(self, a, frac):
        size = int(np.count_nonzero(a))
        if size == 0:
            return
        B = frac * size
        p, theta = water_fill(a, B)
        assert abs(p.sum() - B) <= 1e-12 * B * 10
        assert np.all((p >= 0) & (p <= 1))
        assert np.all(p[a == 0] == 0)
        free = (a > 0) & (p < 1)
        if free.any():
            assert np.allclose(a[free] / p[free], theta, rtol=1e-10)
            assert np.all(a[(p == 1) & (a > 0)] >= theta * (1 - 1e-12))

    @settings(max_examples=100, deadline=None)
    @given(deviations, st.floats(0.05, 1.0), st.floats(0.01, 100))
    def test_scaling_equivariance(self, a, frac, c):
        size = int(np.count_nonzero(a))
        if size == 0:
            return
        B = frac * size
        p1 = optimal_probs_given_centers(a, B)
        p2 = optimal_probs_given_centers(c * a, B)
        assert np.allclose(p1, p2, rtol=1e-9, atol=1e-12)


class TestCenters:
    def test_uniform_probs(self):
        X = gen_synthetic("gaussian", 3, 5, 0).values
        assert np.allclose(optimal_centers_given_probs(X, 0.3), X.mean(axis=1), rtol=1e-12)

    def test_example_against_golden_section(self):
        X = np.array([[0.0, 3.0]])
        probs = np.array([[0.5, 1 / 3]])
        mu = optimal_centers_given_probs(X, probs)[0]
        assert mu == pytest.approx(2.0, rel=1e-15)
        row = lambda m: mse_closed_variable(X, probs, [m])
        assert golden_section(row, -10, 10) == pytest.approx(mu, abs=1e-6)

    def test_all_ones_fallback(self):
        X = np.array([[1.0, 2.0, 6.0]])
        assert optimal_centers_given_probs(X, 1.0)[0] == 3.0
        assert mse_closed_variable(X, 1.0, [3.0]) == mse_closed_variable(X, 1.0, [-7.0]) == 0.0

    def test_zero_probability_pins_center(self):
        X = np.array([[4.0, 1.0, 2.0]])
        assert optimal_centers_given_probs(X, [[0.0, 0.5, 0.5]])[0] == 4.0


class TestProblem:
    def test_validation(self):
        X = np.ones((2, 2))
        with pytest.raises(ValueError):
            BudgetProblem(X, 0)
        with pytest.raises(ValueError):
            BudgetProblem(X, 5)
        with pytest.raises(ValueError):
            BudgetProblem(X, 2, "other")
        with pytest.raises(ValueError):
            BudgetProblem(X, 2, per_node=[1.0, 0.5])


class TestAlternating:
    def test_fixed_mode_is_one_step(self):
        X = gen_synthetic("laplace", 4, 16, 0).values
        mu = X.mean(axis=1)
        sol = alternating_minimize(BudgetProblem(X, 10, "fixed", mu))
        assert sol.iterations == 1 and sol.converged
        expected = optimal_probs_given_centers(np.abs(X - mu[:, None]), 10)
        assert np.array_equal(sol.probs, expected)

    @pytest.mark.parametrize("seed", range(10))
    def test_monotone_history(self, seed):
        rng = np.random.default_rng(seed)
        X = rng.standard_gamma(0.5, size=(int(rng.integers(1, 6)), int(rng.integers(2, 30))))
        B = float(rng.uniform(0.1, 1.0)) * X.size
        sol = alternating_minimize(BudgetProblem(X, B), max_iters=30)
        h = np.array(sol.history)
        assert np.all(np.diff(h) <= 1e-12 * np.maximum(h[:-1], 1e-300))

    def test_solution_invariants(self):
        X = gen_synthetic("chi_squared", 4, 32, 2).values
        sol = alternating_minimize(BudgetProblem(X, 20))
        assert sol.probs.sum() <= 20 * (1 + 1e-9)
        assert np.all((sol.probs >= 0) & (sol.probs <= 1))
        assert sol.objective == mse_closed_variable(X, sol.probs, sol.centers)
        lower, upper, exact = mse_bounds(spread_stats(X, sol.centers), 20)
        assert lower <= sol.objective * (1 + 1e-12) and sol.objective <= upper * (1 + 1e-12)
        if exact is not None:
            assert sol.objective == pytest.approx(exact, rel=1e-10)

    def test_chi_squared_improves_on_row_means(self):
        X = gen_synthetic("chi_squared", 16, 512, 0).values
        B = X.size / 16
        free = alternating_minimize(BudgetProblem(X, B, "free"))
        fixed = alternating_minimize(BudgetProblem(X, B, "fixed"))
        assert free.objective < fixed.objective

    def test_gaussian_row_means_nearly_optimal(self):
        X = gen_synthetic("gaussian", 16, 512, 0).values
        for B in np.geomspace(1, X.size, 6)[:-1]:
            free = alternating_minimize(BudgetProblem(X, B, "free"))
            fixed = alternating_minimize(BudgetProblem(X, B, "fixed"))
            assert free.objective <= fixed.objective
            assert free.objective >= 0.98 * fixed.objective

    @pytest.mark.xfail(strict=True, reason="optimal centers move by about the size of the row means themselves; "
                                           "only the MSE stays within 2% (see the test above)")
    def test_gaussian_centers_close_to_row_means(self):
        X = gen_synthetic("gaussian", 16, 512, 0).values
        sol = alternating_minimize(BudgetProblem(X, X.size / 16, "free"), max_iters=2000)
        row_means = X.mean(axis=1)
        assert sol.converged
        rms = lambda v: np.sqrt(np.mean(v**2))
        assert rms(sol.centers - row_means) <= 0.02 * rms(row_means)

    def test_bad_controls(self):
        with pytest.raises(ValueError):
            alternating_minimize(BudgetProblem(np.eye(2), 1), tol=0)

    def test_budget_above_support_is_clipped(self):
        X = np.array([[1.0, 1.0, 3.0]])
        sol = alternating_minimize(BudgetProblem(X, 3, "fixed", [1.0]))
        assert sol.objective == 0.0 and sol.probs.tolist() == [[0.0, 0.0, 1.0]]


class TestPerNode:
    def test_single_node(self):
        X = gen_synthetic("laplace", 1, 20, 0).values
        pooled = alternating_minimize(BudgetProblem(X, 5))
        split = per_node_split(BudgetProblem(X, 5, per_node=[5.0]))
        assert np.array_equal(split.probs, pooled.probs)
        assert split.objective == pooled.objective

    def test_equal_rows(self):
        row = gen_synthetic("gaussian", 1, 10, 0).values[0]
        X = np.vstack([row, row, row])
        pooled = alternating_minimize(BudgetProblem(X, 6, "fixed"))
        split = per_node_split(BudgetProblem(X, 6, "fixed", per_node=[2.0, 2.0, 2.0]))
        assert np.allclose(split.probs, pooled.probs, rtol=1e-12)
        assert split.objective == pytest.approx(pooled.objective, rel=1e-12)

    def test_pooled_is_no_worse(self):
        X = np.array([[3.0, -1.0], [1.0, -1.0]])
        mu = np.zeros(2)
        pooled = alternating_minimize(BudgetProblem(X, 2, "fixed", mu))
        split = per_node_split(BudgetProblem(X, 2, "fixed", mu, per_node=[1.0, 1.0]))
        assert pooled.objective <= split.objective
        assert split.objective == pytest.approx(mse_closed_variable(X, [[0.75, 0.25], [0.5, 0.5]], mu))

    @settings(max_examples=40, deadline=None)
    @given(arrays(np.float64, (3, 5), elements=st.floats(-10, 10, allow_nan=False)))
    def test_pooled_is_no_worse_property(self, X):
        mu = X.mean(axis=1)
        sizes = np.count_nonzero(X - mu[:, None], axis=1)
        if np.any(sizes == 0):
            return
        budgets = 0.5 * sizes
        pooled = alternating_minimize(BudgetProblem(X, budgets.sum(), "fixed", mu))
        split = per_node_split(BudgetProblem(X, budgets.sum(), "fixed", mu, per_node=budgets))
        assert pooled.objective <= split.objective * (1 + 1e-9)

    def test_needs_budgets(self):
        with pytest.raises(ValueError):
            per_node_split(BudgetProblem(np.eye(2), 1))
        with pytest.raises(ValueError):
            per_node_split(BudgetProblem(np.array([[1.0, 2.0, 1.0]]), 2.0, "fixed", [1.0], per_node=[2.0]))
