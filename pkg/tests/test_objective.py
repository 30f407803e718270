import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import explicit_inverse_error, random_problem_arrays

from opcorrect import linalg
from opcorrect.exceptions import ContractViolation, SingularOperator
from opcorrect.objective import (
    CorrectionProblem,
    ObservationSelector,
    TrainingSet,
    fd_gradient,
    gradient,
    inverse_error,
    objective,
    observe,
    scatter,
    value_and_gradient,
    virtue_proxy,
)


def make_problem(rng, n=6, N=4, n_obs=None, lam=0.0, delta=1.0):
    M, idx, Q, D = random_problem_arrays(rng, n, N, n_obs)
    return CorrectionProblem(M, ObservationSelector(n, idx), TrainingSet(Q, D), lam, delta)


def exact_problem(M, Q, lam=0.0):
    """Full observation of ``M^{-1} Q``: zero inverse error at C = 0."""
    n = M.shape[0]
    sel = ObservationSelector.full(n)
    return CorrectionProblem(M, sel, TrainingSet(Q, observe(sel, linalg.solve(M, Q))), lam, 1.0)


# -- selector


def test_observe_full_selector_is_identity(rng):
    X = rng.standard_normal((4, 3))
    np.testing.assert_array_equal(observe(ObservationSelector.full(4), X), X)


def test_observe_first_row():
    X = np.arange(6.0).reshape(3, 2)
    np.testing.assert_array_equal(observe(ObservationSelector(3, (0,)), X), [[0.0, 1.0]])


def test_observe_preserves_order():
    X = np.array([[1.0], [2.0], [3.0]])
    np.testing.assert_array_equal(observe(ObservationSelector(3, (2, 0)), X), [[3.0], [1.0]])


def test_observe_shape_mismatch():
    with pytest.raises(ContractViolation):
        observe(ObservationSelector(3, (0,)), np.ones((4, 1)))


@pytest.mark.parametrize("indices", [(), (0, 0), (3,), (-1,)])
def test_selector_invariants(indices):
    with pytest.raises(ContractViolation):
        ObservationSelector(3, indices)


def test_observe_scatter_adjoint(rng):
    sel = ObservationSelector(7, (5, 1, 3))
    X = rng.standard_normal((7, 4))
    Y = rng.standard_normal((3, 4))
    assert np.sum(observe(sel, X) * Y) == pytest.approx(np.sum(X * scatter(sel, Y)), rel=1e-13)


# -- problem construction


def test_problem_rejects_singular_m():
    sel = ObservationSelector.full(2)
    data = TrainingSet(np.eye(2), np.eye(2))
    with pytest.raises(SingularOperator):
        CorrectionProblem(np.ones((2, 2)), sel, data)


@pytest.mark.parametrize("lam,delta", [(-1.0, 1.0), (0.0, 0.0), (0.0, -2.0)])
def test_problem_rejects_bad_parameters(lam, delta):
    with pytest.raises(ContractViolation):
        CorrectionProblem(np.eye(2), ObservationSelector.full(2), TrainingSet(np.eye(2), np.eye(2)), lam, delta)


def test_problem_rejects_dimension_mismatch():
    with pytest.raises(ContractViolation):
        CorrectionProblem(np.eye(3), ObservationSelector(3, (0, 1)), TrainingSet(np.eye(3), np.eye(3)))


# -- inverse error, proxy, objective


def test_inverse_error_zero_for_exact_data(rng):
    Q = rng.standard_normal((4, 3))
    assert inverse_error(exact_problem(np.eye(4), Q), np.zeros((4, 4))) == 0.0


def test_inverse_error_diagonal():
    sel = ObservationSelector.full(2)
    p = CorrectionProblem(np.diag([1.0, 2.0]), sel, TrainingSet(np.eye(2), np.zeros((2, 2))))
    assert inverse_error(p, np.zeros((2, 2))) == pytest.approx(1.25)


def test_inverse_error_matches_explicit_inverse(rng):
    p = make_problem(rng, n=6, N=5, n_obs=4)
    C = 0.1 * rng.standard_normal((6, 6))
    ref = explicit_inverse_error(p.M, C, p.data.Q, p.data.D, p.selector.indices)
    assert inverse_error(p, C) == pytest.approx(ref, rel=1e-10)


def test_inverse_error_column_permutation_invariant(rng):
    p = make_problem(rng, n=5, N=6)
    perm = rng.permutation(6)
    q = p.with_params(data=TrainingSet(p.data.Q[:, perm], p.data.D[:, perm]))
    C = 0.1 * rng.standard_normal((5, 5))
    assert inverse_error(q, C) == pytest.approx(inverse_error(p, C), rel=1e-12)


def test_constructive_zero_with_correction(rng):
    n = 5
    M = np.eye(n) * 2.0
    C = 0.2 * rng.standard_normal((n, n))
    Q = rng.standard_normal((n, 3))
    sel = ObservationSelector.full(n)
    p = CorrectionProblem(M, sel, TrainingSet(Q, observe(sel, linalg.solve(M + C, Q))))
    assert inverse_error(p, C) == pytest.approx(0.0, abs=1e-24)


def test_virtue_proxy_values(rng):
    Q = np.ones((3, 1))
    assert virtue_proxy(exact_problem(np.eye(3), Q), np.zeros((3, 3))) == pytest.approx(3.0)
    Q = np.ones((2, 1))
    assert virtue_proxy(exact_problem(2.0 * np.eye(2), Q), np.zeros((2, 2))) == pytest.approx(0.5)


def test_virtue_proxy_bounds_sigma_min(rng):
    p = make_problem(rng)
    C = 0.3 * rng.standard_normal((6, 6))
    smin = linalg.singular_values(p.M + C)[-1]
    assert virtue_proxy(p, C) >= smin**-2


def test_objective_lambda_zero_is_inverse_error(rng):
    p = make_problem(rng)
    C = 0.1 * rng.standard_normal((6, 6))
    assert objective(p, C) == inverse_error(p, C)


def test_objective_identity_example(rng):
    Q = rng.standard_normal((4, 2))
    p = exact_problem(np.eye(4), Q, lam=1.0)
    assert objective(p, np.zeros((4, 4))) == pytest.approx(4.0)


def test_objective_recomposes(rng):
    p = make_problem(rng, lam=0.7)
    C = 0.1 * rng.standard_normal((6, 6))
    assert objective(p, C) == pytest.approx(inverse_error(p, C) + 0.7 * virtue_proxy(p, C), rel=1e-12)


def test_objective_singular_correction_raises():
    p = exact_problem(np.eye(2), np.eye(2))
    with pytest.raises(SingularOperator):
        objective(p, -np.eye(2))


# -- gradient


def test_gradient_zero_at_exact_fit(rng):
    p = exact_problem(np.eye(4), rng.standard_normal((4, 3)))
    np.testing.assert_array_equal(gradient(p, np.zeros((4, 4))), np.zeros((4, 4)))


def test_gradient_proxy_only():
    p = exact_problem(np.eye(2), np.eye(2), lam=1.0)
    np.testing.assert_allclose(gradient(p, np.zeros((2, 2))), -2.0 * np.eye(2))


def test_gradient_matches_finite_differences(rng):
    p = make_problem(rng, n=8, N=5, n_obs=6, lam=0.3)
    C = 0.1 * rng.standard_normal((8, 8))
    g = gradient(p, C)
    fd = fd_gradient(p, C, step=1e-6)
    assert np.max(np.abs(g - fd) / (1 + np.abs(fd))) <= 1e-5


@settings(max_examples=12, deadline=None)
@given(
    n=st.integers(2, 12),
    N=st.integers(1, 8),
    lam=st.sampled_from([0.0, 1.0, 1e3]),
    seed=st.integers(0, 2**32 - 1),
)
def test_gradient_consistency_property(n, N, lam, seed):
    rng = np.random.default_rng(seed)
    n_obs = int(rng.integers(1, n + 1))
    p = make_problem(rng, n=n, N=N, n_obs=n_obs, lam=lam)
    C = 0.05 * rng.standard_normal((n, n))
    g = gradient(p, C)
    fd = fd_gradient(p, C, step=1e-6)
    assert np.all(np.isfinite(g))
    assert np.max(np.abs(g - fd) / (1 + np.abs(fd))) <= 1e-5


def test_value_and_gradient_consistent(rng):
    p = make_problem(rng, lam=2.0)
    C = 0.1 * rng.standard_normal((6, 6))
    value, g = value_and_gradient(p, C)
    assert value == objective(p, C)
    np.testing.assert_array_equal(g, gradient(p, C))


# -- finite-difference oracle


def test_fd_gradient_quadratic_seam(rng):
    p = make_problem(rng, n=4)
    C = rng.standard_normal((4, 4))
    fd = fd_gradient(p, C, step=1e-4, func=lambda X: float(np.sum(X * X)))
    np.testing.assert_allclose(fd, 2.0 * C, atol=1e-9)


def test_fd_gradient_rejects_zero_step(rng):
    with pytest.raises(ContractViolation):
        fd_gradient(make_problem(rng), np.zeros((6, 6)), step=0.0)


def test_fd_gradient_names_singular_entry():
    p = exact_problem(np.diag([1.0, 1e-7]), np.eye(2))
    with pytest.raises(SingularOperator, match=r"\(1, 1\)"):
        fd_gradient(p, np.zeros((2, 2)), step=1e-7)
