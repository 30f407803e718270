"""Frank-Wolfe minimization of the correction objective over a nuclear-norm ball."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ContractViolation, SingularOperator, ZeroGradient
from .linalg import frobenius_inner, nuclear_norm, top_singular_triplet
from .objective import objective, value_and_gradient

logger = logging.getLogger(__name__)

STEP_RULES = ("classic", "backtracking_line_search")
LMO_METHODS = ("full_svd", "power_iteration")
TERMINATIONS = ("gap_converged", "max_iterations", "stationary_zero_gradient")

MAX_SHRINKS = 60
FEASIBILITY_SLACK = 1e-8


@dataclass(frozen=True)
class SolverConfig:
    """Frank-Wolfe settings.

    ``gap_tolerance`` is absolute; ``relative_gap_tolerance`` is a fraction of
    the gap at the starting point. The run stops once the gap drops below the
    larger of the two.
    """

    max_iterations: int = 500
    gap_tolerance: float = 0.0
    relative_gap_tolerance: float = 1e-6
    step_rule: str = "backtracking_line_search"
    lmo_method: str = "full_svd"
    lmo_tolerance: float = 1e-12
    backtracking_shrink: float = 0.5
    backtracking_sufficient_decrease: float = 1e-4

    def __post_init__(self):
        if int(self.max_iterations) < 1:
            raise ContractViolation("max_iterations must be >= 1")
        if self.gap_tolerance < 0 or self.relative_gap_tolerance < 0:
            raise ContractViolation("gap tolerances must be nonnegative")
        if self.step_rule not in STEP_RULES:
            raise ContractViolation(f"step_rule must be one of {STEP_RULES}")
        if self.lmo_method not in LMO_METHODS:
            raise ContractViolation(f"lmo_method must be one of {LMO_METHODS}")
        if not self.lmo_tolerance > 0:
            raise ContractViolation("lmo_tolerance must be positive")
        if not 0 < self.backtracking_shrink < 1:
            raise ContractViolation("backtracking_shrink must lie in (0, 1)")
        if not 0 < self.backtracking_sufficient_decrease < 1:
            raise ContractViolation("backtracking_sufficient_decrease must lie in (0, 1)")


@dataclass
class SolveResult:
    correction: np.ndarray
    objective_history: list = field(default_factory=list)
    gap_history: list = field(default_factory=list)
    nuclear_norm_history: list = field(default_factory=list)
    step_history: list = field(default_factory=list)
    iterations_run: int = 0
    termination: str = "max_iterations"


def lmo_nuclear_ball(G, delta, method="full_svd", tol=1e-12):
    """Vertex of ``{||X||_* <= delta}`` minimizing ``<X, G>``: ``-delta u1 v1^T``.

    Raises ``ZeroGradient`` when ``G`` is identically zero.
    """
    if not delta > 0:
        raise ContractViolation("delta must be positive")
    trip = top_singular_triplet(G, method=method, tol=tol)
    return -delta * np.outer(trip.left, trip.right)


def duality_gap(C, G, S):
    """Frank-Wolfe gap ``<C - S, G>``."""
    return frobenius_inner(np.asarray(C) - np.asarray(S), G)


def _safe_value(func, X):
    try:
        val = func(X)
    except SingularOperator:
        return np.inf
    return val if np.isfinite(val) else np.inf


def step_size(iteration, rule, problem, C, direction, config, grad=None, value=None, func=None):
    """Step length along ``direction = S - C``.

    ``classic`` is the open-loop ``2 / (k + 2)``. ``backtracking_line_search``
    shrinks from 1 until an Armijo condition on the gap holds; singular probes
    count as infinite objective. Returns 0 when 60 shrinks do not suffice.
    """
    if rule == "classic":
        return 2.0 / (iteration + 2.0)
    if rule != "backtracking_line_search":
        raise ContractViolation(f"unknown step rule {rule!r}")
    if func is None:
        func = lambda X: objective(problem, X)  # noqa: E731
    if value is None:
        value = func(C)
    if grad is None:
        grad = value_and_gradient(problem, C)[1]
    decrease = -frobenius_inner(direction, grad)
    gamma = 1.0
    for _ in range(MAX_SHRINKS + 1):
        trial = _safe_value(func, C + gamma * direction)
        # strict decrease guards against roundoff-only acceptance at tiny gamma
        if trial < value and trial <= value - config.backtracking_sufficient_decrease * gamma * decrease:
            return gamma
        gamma *= config.backtracking_shrink
    return 0.0


def solve(problem, config=None, check_feasibility=True):
    """Run Frank-Wolfe from ``C = 0`` on ``problem``.

    The objective is nonconvex in ``C``, so a small gap signals a stationary
    point rather than a global minimizer.
    """
    config = config or SolverConfig()
    n = problem.n
    C = np.zeros((n, n))
    result = SolveResult(correction=C)
    tol = None

    for k in range(config.max_iterations + 1):
        value, G = value_and_gradient(problem, C)
        try:
            S = lmo_nuclear_ball(G, problem.delta, config.lmo_method, config.lmo_tolerance)
        except ZeroGradient:
            S = C.copy()
        gap = duality_gap(C, G, S)
        nuc = nuclear_norm(C)
        result.objective_history.append(value)
        result.gap_history.append(gap)
        result.nuclear_norm_history.append(nuc)
        if check_feasibility and nuc > problem.delta * (1 + FEASIBILITY_SLACK):
            raise RuntimeError(f"iterate {k} left the feasible ball: {nuc} > {problem.delta}")
        if tol is None:
            tol = max(config.gap_tolerance, config.relative_gap_tolerance * max(gap, 0.0))
        if gap <= tol:
            result.termination = "gap_converged"
            break
        if k == config.max_iterations:
            result.termination = "max_iterations"
            break
        direction = S - C
        gamma = step_size(k, config.step_rule, problem, C, direction, config, grad=G, value=value)
        if gamma == 0.0:
            result.termination = "stationary_zero_gradient"
            break
        C = C + gamma * direction
        result.step_history.append(gamma)
        result.iterations_run = k + 1
        if k % 50 == 0:
            logger.debug("iter %d  f=%.6e  gap=%.3e  step=%.3e", k, value, gap, gamma)

    result.correction = C
    return result
