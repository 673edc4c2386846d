import numpy as np
import pytest

from queryguard.features import DegenerateLabels
from queryguard.svm import (
    KernelSpec,
    decision_value,
    decision_values,
    kernel_matrix,
    margin_members,
    train_svm,
)

RBF = KernelSpec("rbf", gamma=2.0)
LINEAR = KernelSpec(kind="linear", gamma=None)


def dual_objective(alphas, y, K):
    """W(a) = sum a - 1/2 sum_ij a_i a_j y_i y_j K_ij, the quantity the solver maximizes."""
    v = alphas * y
    return float(alphas.sum() - 0.5 * v @ K @ v)


def brute_force_dual(y, K, C, steps=48):
    """Best dual objective over a feasible grid; independent of the solver.

    One alpha is eliminated through the equality constraint, the rest are
    enumerated on a regular grid over [0, C].
    """
    n = len(y)
    free = n - 1
    axis = np.linspace(0.0, C, steps + 1)
    grids = np.meshgrid(*([axis] * free), indexing="ij")
    A = np.stack([g.ravel() for g in grids], axis=1)  # (steps+1)^free x free
    # a_last = -y_last * sum(a_i y_i) keeps the equality constraint exact
    last = -y[-1] * (A @ y[:free])
    ok = (last >= 0.0) & (last <= C)
    A = np.column_stack([A[ok], last[ok]])
    V = A * y[None, :]
    obj = A.sum(axis=1) - 0.5 * np.einsum("ij,jk,ik->i", V, K, V)
    return float(obj.max())


class TestAnalyticCases:
    def test_two_point_midpoint(self):
        # max-margin separator of two points is the perpendicular bisector
        X = np.array([[0.0, 0.0], [2.0, 2.0]])
        y = np.array([-1.0, 1.0])
        model = train_svm(X, y, C=10.0, kernel=LINEAR, seed=0)
        assert abs(decision_value(model, np.array([1.0, 1.0]))) <= 1e-3
        assert decision_value(model, X[0]) == pytest.approx(-1.0, abs=1e-3)
        assert decision_value(model, X[1]) == pytest.approx(1.0, abs=1e-3)

    def test_two_point_asymmetric(self):
        X = np.array([[-1.0], [3.0]])
        y = np.array([1.0, -1.0])
        model = train_svm(X, y, C=100.0, kernel=LINEAR, seed=0)
        assert abs(decision_value(model, np.array([1.0]))) <= 1e-3

    def test_xor_rbf_perfect(self):
        X = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]])
        y = np.array([-1.0, -1.0, 1.0, 1.0])
        model = train_svm(X, y, C=10.0, kernel=RBF, seed=0)
        f = decision_values(model, X)
        assert np.all(np.sign(f) == y), f
        assert model.converged

    def test_linearly_separable_accuracy(self):
        rng = np.random.default_rng(7)
        X = np.vstack([rng.normal(-2, 0.5, size=(20, 2)), rng.normal(2, 0.5, size=(20, 2))])
        y = np.array([-1.0] * 20 + [1.0] * 20)
        model = train_svm(X, y, C=5.0, kernel=LINEAR, seed=0)
        assert np.all(np.sign(decision_values(model, X)) == y)


def _random_problem(seed, n=14, d=3):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    y = np.where(X[:, 0] + 0.3 * rng.normal(size=n) > 0, 1.0, -1.0)
    if np.all(y > 0) or np.all(y < 0):
        y[0] = -y[0]
    return X, y


class TestDualFeasibility:
    @pytest.mark.parametrize("seed", range(12))
    def test_constraints_hold(self, seed):
        # Eq. of the box-constrained dual: sum a_i y_i = 0 and 0 <= a <= C
        X, y = _random_problem(seed)
        C = [0.1, 1.0, 10.0][seed % 3]
        kernel = [RBF, LINEAR][seed % 2]
        model = train_svm(X, y, C=C, kernel=kernel, tol=1e-3, seed=seed)
        a = model.alphas
        assert abs(np.sum(a * y)) <= 1e-6
        assert np.all(a >= 0.0)
        assert np.all(a <= C + 1e-3)

    def test_coeffs_are_alpha_y_over_svs(self):
        X, y = _random_problem(3)
        model = train_svm(X, y, C=1.0, kernel=RBF, seed=0)
        sv = model.alphas > 1e-12
        assert np.allclose(model.coeffs, (model.alphas * y)[sv])
        assert len(model.support_vectors) == int(sv.sum())

    def test_kkt_violation_small_when_converged(self):
        X, y = _random_problem(5)
        model = train_svm(X, y, C=1.0, kernel=RBF, tol=1e-3, seed=0)
        assert model.converged
        # free SVs sit on the margin, bound points on the right side, up to tol-ish slack
        assert model.kkt_violation <= 0.05


class TestDualOptimality:
    @pytest.mark.parametrize("seed", range(6))
    def test_matches_brute_force(self, seed):
        rng = np.random.default_rng(100 + seed)
        n = 4
        X = rng.normal(size=(n, 2))
        y = np.array([1.0, 1.0, -1.0, -1.0])
        C = [0.5, 1.0, 2.0][seed % 3]
        kernel = [RBF, LINEAR][seed % 2]
        K = kernel_matrix(kernel, X, X)
        model = train_svm(X, y, C=C, kernel=kernel, tol=1e-4, seed=seed)
        got = dual_objective(model.alphas, y, K)
        best = brute_force_dual(y, K, C)
        # the grid point is feasible, so the solver may only fall short by its gap
        assert got >= best - 5e-3 * max(1.0, best), (got, best)

    def test_three_point_exact(self):
        # alphas solvable by hand: symmetric pair plus one opposite point
        X = np.array([[0.0], [2.0], [4.0]])
        y = np.array([-1.0, 1.0, 1.0])
        K = kernel_matrix(LINEAR, X, X)
        model = train_svm(X, y, C=100.0, kernel=LINEAR, seed=0)
        got = dual_objective(model.alphas, y, K)
        best = brute_force_dual(y, K, C=100.0, steps=400)
        assert got >= best - 1e-2
        # separator must sit at x = 1 (midpoint of the closest opposite pair)
        assert abs(decision_value(model, np.array([1.0]))) <= 1e-2


class TestModelSurface:
    def test_margin_members(self):
        X = np.array([[0.0, 0.0], [2.0, 2.0]])
        y = np.array([-1.0, 1.0])
        model = train_svm(X, y, C=10.0, kernel=LINEAR, seed=0)
        probe = np.array([[1.0, 1.0], [10.0, 10.0], [0.0, 0.0]])
        inside = margin_members(model, probe)
        assert inside.tolist() == [True, False, True]

    def test_deterministic(self):
        X, y = _random_problem(11)
        a = train_svm(X, y, C=1.0, kernel=RBF, seed=4)
        b = train_svm(X, y, C=1.0, kernel=RBF, seed=4)
        assert np.array_equal(a.alphas, b.alphas)
        assert a.bias == b.bias

    def test_degenerate_labels(self):
        X = np.ones((4, 2))
        with pytest.raises(DegenerateLabels):
            train_svm(X, np.ones(4), C=1.0, kernel=RBF)

    def test_bad_params(self):
        X = np.array([[0.0], [1.0]])
        y = np.array([-1.0, 1.0])
        with pytest.raises(ValueError):
            train_svm(X, y, C=0.0, kernel=RBF)
        with pytest.raises(ValueError):
            train_svm(X, y, C=1.0, kernel=RBF, tol=0.0)
        with pytest.raises(ValueError):
            train_svm(np.zeros((0, 1)), np.zeros(0), C=1.0, kernel=RBF)

    def test_sweep_cap_reports_not_raises(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(30, 2))
        y = np.where(rng.random(30) > 0.5, 1.0, -1.0)
        if np.all(y > 0) or np.all(y < 0):
            y[0] = -y[0]
        model = train_svm(X, y, C=1.0, kernel=RBF, seed=0, max_passes=1)
        assert model.converged is False

    def test_decision_values_shape(self):
        X, y = _random_problem(2)
        model = train_svm(X, y, C=1.0, kernel=RBF, seed=0)
        out = decision_values(model, X[:5])
        assert out.shape == (5,)
