import numpy as np
import pytest

from opcorrect import linalg
from opcorrect.exceptions import ContractViolation, ZeroGradient
from opcorrect.frank_wolfe import (
    SolverConfig,
    duality_gap,
    lmo_nuclear_ball,
    solve,
    step_size,
)
from opcorrect.objective import (
    CorrectionProblem,
    ObservationSelector,
    TrainingSet,
    inverse_error,
    observe,
)


def planted_problem(seed=0, n=8, planted=0.3, delta=0.5):
    rng = np.random.default_rng(seed)
    M = np.eye(n) + 0.1 * rng.standard_normal((n, n))
    u, v = rng.standard_normal(n), rng.standard_normal(n)
    C_star = planted * np.outer(u / np.linalg.norm(u), v / np.linalg.norm(v))
    Q = np.eye(n) + 0.2 * rng.standard_normal((n, n))
    sel = ObservationSelector.full(n)
    data = TrainingSet(Q, observe(sel, linalg.solve(M + C_star, Q)))
    return CorrectionProblem(M, sel, data, 0.0, delta), C_star


def random_feasible(rng, shape, delta):
    X = rng.standard_normal(shape)
    return X * (delta * rng.uniform() / linalg.nuclear_norm(X))


# -- LMO


def test_lmo_diagonal():
    S = lmo_nuclear_ball(np.diag([2.0, 1.0]), 5.0)
    np.testing.assert_allclose(S, np.diag([-5.0, 0.0]), atol=1e-12)
    assert linalg.frobenius_inner(S, np.diag([2.0, 1.0])) == pytest.approx(-10.0)


def test_lmo_rank_one(rng):
    u, v = rng.standard_normal(5), rng.standard_normal(3)
    S = lmo_nuclear_ball(np.outer(u, v), 2.0)
    expected = -2.0 * np.outer(u / np.linalg.norm(u), v / np.linalg.norm(v))
    np.testing.assert_allclose(S, expected, atol=1e-12)


@pytest.mark.parametrize("method", ["full_svd", "power_iteration"])
def test_lmo_is_on_the_sphere_and_optimal(method, rng):
    for _ in range(5):
        G = rng.standard_normal((7, 7))
        delta = rng.uniform(0.1, 10.0)
        S = lmo_nuclear_ball(G, delta, method=method, tol=1e-12)
        assert linalg.nuclear_norm(S) == pytest.approx(delta, rel=1e-10)
        sigma1 = linalg.singular_values(G)[0]
        assert linalg.frobenius_inner(S, G) == pytest.approx(-delta * sigma1, rel=1e-8)
        for _ in range(100):
            X = random_feasible(rng, G.shape, delta)
            assert linalg.frobenius_inner(S, G) <= linalg.frobenius_inner(X, G) + 1e-8 * np.linalg.norm(G) * delta


def test_lmo_zero_gradient():
    with pytest.raises(ZeroGradient):
        lmo_nuclear_ball(np.zeros((3, 3)), 1.0)


def test_lmo_rejects_bad_delta():
    with pytest.raises(ContractViolation):
        lmo_nuclear_ball(np.eye(2), 0.0)


# -- duality gap


def test_gap_examples(rng):
    G = rng.standard_normal((4, 4))
    S = lmo_nuclear_ball(G, 3.0)
    assert duality_gap(S, G, S) == 0.0
    assert duality_gap(np.zeros((4, 4)), G, S) == pytest.approx(3.0 * linalg.singular_values(G)[0])
    for _ in range(50):
        C = random_feasible(rng, G.shape, 3.0)
        assert duality_gap(C, G, S) >= -1e-10


# -- step size


def test_classic_steps():
    cfg = SolverConfig(step_rule="classic")
    assert step_size(0, "classic", None, None, None, cfg) == 1.0
    assert step_size(8, "classic", None, None, None, cfg) == pytest.approx(0.2)


def test_backtracking_accepts_full_step_onto_minimizer(rng):
    C_star = rng.standard_normal((3, 3))
    C = np.zeros((3, 3))
    func = lambda X: float(np.sum((X - C_star) ** 2))  # noqa: E731
    grad = 2.0 * (C - C_star)
    gamma = step_size(0, "backtracking_line_search", None, C, C_star - C, SolverConfig(), grad=grad, func=func)
    assert gamma == 1.0


def test_backtracking_halves_on_overshoot():
    # minimizer sits at 0.3 along the direction: gamma = 1 and 0.5 overshoot
    C = np.zeros((1, 1))
    direction = np.ones((1, 1))
    func = lambda X: float((X[0, 0] - 0.3) ** 2)  # noqa: E731
    grad = np.array([[-0.6]])
    gamma = step_size(0, "backtracking_line_search", None, C, direction, SolverConfig(), grad=grad, func=func)
    assert gamma == 0.5


def test_backtracking_exhausted_returns_zero():
    C = np.zeros((1, 1))
    func = lambda X: 1.0 + abs(X[0, 0])  # noqa: E731
    gamma = step_size(
        0, "backtracking_line_search", None, C, np.ones((1, 1)), SolverConfig(), grad=-np.ones((1, 1)), func=func
    )
    assert gamma == 0.0


def test_config_validation():
    with pytest.raises(ContractViolation):
        SolverConfig(max_iterations=0)
    with pytest.raises(ContractViolation):
        SolverConfig(step_rule="exact")
    with pytest.raises(ContractViolation):
        SolverConfig(backtracking_shrink=1.0)


# -- solve


def test_exact_model_needs_no_correction(rng):
    n = 4
    Q = rng.standard_normal((n, 3))
    sel = ObservationSelector.full(n)
    p = CorrectionProblem(np.eye(n), sel, TrainingSet(Q, Q), 0.0, 1.0)
    result = solve(p)
    assert result.termination == "gap_converged"
    assert result.iterations_run == 0
    np.testing.assert_array_equal(result.correction, np.zeros((n, n)))
    assert result.gap_history == [0.0]


def test_two_by_two_planted_recovery():
    n = 2
    C_star = 0.4 * np.outer([0.6, 0.8], [1.0, 0.0])
    sel = ObservationSelector.full(n)
    data = TrainingSet(np.eye(n), linalg.solve(np.eye(n) + C_star, np.eye(n)))
    p = CorrectionProblem(np.eye(n), sel, data, 0.0, 0.5)
    result = solve(p, SolverConfig(max_iterations=500))
    assert inverse_error(p, result.correction) <= 1e-6


def test_planted_recovery_invariants():
    p, _ = planted_problem()
    result = solve(p, SolverConfig(max_iterations=500))
    h = np.array(result.objective_history)
    assert inverse_error(p, result.correction) <= 1e-6
    assert np.all(np.diff(h) <= 1e-12)
    assert max(result.nuclear_norm_history) <= p.delta * (1 + 1e-8)
    assert min(result.gap_history) >= -1e-10
    assert len(result.gap_history) == len(h) == result.iterations_run + 1


def test_rank_growth_bound():
    p, _ = planted_problem(seed=2)
    for k in range(1, 7):
        cfg = SolverConfig(max_iterations=k, step_rule="classic", relative_gap_tolerance=0.0)
        result = solve(p, cfg)
        assert result.iterations_run == k
        assert linalg.numerical_rank(result.correction, 1e-10) <= k + 1


def test_lambda_only_problem_stays_feasible(rng):
    n = 6
    M = np.eye(n) + 0.3 * rng.standard_normal((n, n))
    sel = ObservationSelector(n, (0, 2, 4))
    Q = rng.standard_normal((n, 3))
    data = TrainingSet(Q, rng.standard_normal((3, 3)))
    p = CorrectionProblem(M, sel, data, 1e3, 0.8)
    result = solve(p, SolverConfig(max_iterations=200))
    assert max(result.nuclear_norm_history) <= 0.8 * (1 + 1e-8)
    assert np.all(np.diff(result.objective_history) <= 1e-12)


@pytest.mark.parametrize("method", ["full_svd", "power_iteration"])
def test_solve_is_deterministic(method):
    p, _ = planted_problem(seed=4)
    cfg = SolverConfig(max_iterations=60, lmo_method=method)
    a, b = solve(p, cfg), solve(p, cfg)
    assert a.objective_history == b.objective_history
    np.testing.assert_array_equal(a.correction, b.correction)


def test_classic_rule_runs_to_budget():
    p, _ = planted_problem(seed=1)
    result = solve(p, SolverConfig(max_iterations=30, step_rule="classic", relative_gap_tolerance=0.0))
    assert result.termination == "max_iterations"
    assert result.iterations_run == 30
    assert result.step_history[0] == 1.0
