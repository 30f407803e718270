"""Correction objective: inverse error plus a conditioning penalty, and its gradient.

For a corrected operator ``A = M + C`` the objective is

    f(C) = ||observe(A^{-1} Q) - D||_F^2 + lam * ||A^{-1}||_F^2

with closed-form gradient

    grad f(C) = -2 A^{-T} [scatter(residual) Q^T A^{-T} + lam * A^{-1} A^{-T}].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ContractViolation, SingularOperator
from .linalg import LUFactor, as_operator


@dataclass(frozen=True)
class ObservationSelector:
    """Row-sampling map from a state of length ``state_dim`` to ``indices``."""

    state_dim: int
    indices: tuple

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if not idx:
            raise ContractViolation("selector needs at least one index")
        if len(set(idx)) != len(idx):
            raise ContractViolation("selector indices must be unique")
        if any(i < 0 or i >= self.state_dim for i in idx):
            raise ContractViolation(f"selector indices must lie in [0, {self.state_dim})")
        object.__setattr__(self, "indices", idx)

    @classmethod
    def full(cls, n):
        return cls(n, tuple(range(n)))

    @property
    def n_obs(self):
        return len(self.indices)


def observe(selector, states):
    """Restrict the rows of ``states`` to the selector's indices, in order."""
    states = np.asarray(states, dtype=float)
    if states.shape[0] != selector.state_dim:
        raise ContractViolation(
            f"states have {states.shape[0]} rows, selector expects {selector.state_dim}"
        )
    return states[list(selector.indices)]


def scatter(selector, obs):
    """Adjoint of :func:`observe`: place rows back at the indices, zero elsewhere."""
    obs = np.asarray(obs, dtype=float)
    if obs.shape[0] != selector.n_obs:
        raise ContractViolation(f"expected {selector.n_obs} rows, got {obs.shape[0]}")
    out = np.zeros((selector.state_dim,) + obs.shape[1:])
    out[list(selector.indices)] = obs
    return out


@dataclass(frozen=True)
class TrainingSet:
    """Controls ``Q`` (n x N) and observations ``D`` (n_obs x N); columns pair up."""

    Q: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        Q = as_operator(self.Q, "Q")
        D = as_operator(self.D, "D")
        if Q.shape[1] != D.shape[1]:
            raise ContractViolation(f"Q has {Q.shape[1]} columns but D has {D.shape[1]}")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "D", D)

    @property
    def n_samples(self):
        return self.Q.shape[1]


@dataclass(frozen=True)
class CorrectionProblem:
    M: np.ndarray
    selector: ObservationSelector
    data: TrainingSet
    lam: float = 0.0
    delta: float = 1.0

    def __post_init__(self):
        M = as_operator(self.M, "M", square=True)
        object.__setattr__(self, "M", M)
        if self.selector.state_dim != M.shape[0]:
            raise ContractViolation("selector state_dim must equal M's size")
        if self.data.Q.shape[0] != M.shape[0]:
            raise ContractViolation(f"Q has {self.data.Q.shape[0]} rows, M is {M.shape[0]}")
        if self.data.D.shape[0] != self.selector.n_obs:
            raise ContractViolation(
                f"D has {self.data.D.shape[0]} rows, selector observes {self.selector.n_obs}"
            )
        if not (np.isfinite(self.lam) and self.lam >= 0):
            raise ContractViolation("lam must be a finite nonnegative number")
        if not (np.isfinite(self.delta) and self.delta > 0):
            raise ContractViolation("delta must be positive")
        LUFactor(M)  # probe: raises SingularOperator for a singular M

    @property
    def n(self):
        return self.M.shape[0]

    def with_params(self, **kw):
        fields = dict(M=self.M, selector=self.selector, data=self.data, lam=self.lam, delta=self.delta)
        fields.update(kw)
        return CorrectionProblem(**fields)


def _check_correction(problem, C):
    C = np.asarray(C, dtype=float)
    if C.shape != problem.M.shape:
        raise ContractViolation(f"correction shape {C.shape} != M shape {problem.M.shape}")
    return C


def _pieces(problem, C):
    """Factor ``M + C`` once; return the inverse, states and observation residual."""
    C = _check_correction(problem, C)
    lu = LUFactor(problem.M + C)
    inv = lu.inverse()
    states = lu.solve(problem.data.Q)
    residual = observe(problem.selector, states) - problem.data.D
    return inv, states, residual


def inverse_error(problem, C):
    _, _, r = _pieces(problem, C)
    return float(np.sum(r * r))


def virtue_proxy(problem, C):
    inv, _, _ = _pieces(problem, C)
    return float(np.sum(inv * inv))


def objective(problem, C):
    inv, _, r = _pieces(problem, C)
    return float(np.sum(r * r)) + problem.lam * float(np.sum(inv * inv))


def value_and_gradient(problem, C):
    """Objective value and gradient at ``C`` from a single factorization."""
    inv, states, r = _pieces(problem, C)
    value = float(np.sum(r * r)) + problem.lam * float(np.sum(inv * inv))
    inner = scatter(problem.selector, r) @ states.T
    if problem.lam:
        inner = inner + problem.lam * (inv @ inv.T)
    return value, -2.0 * inv.T @ inner


def gradient(problem, C):
    return value_and_gradient(problem, C)[1]


def fd_gradient(problem, C, step=1e-6, func=None):
    """Central-difference gradient, one entry at a time.

    ``func`` replaces the objective (a test seam); by default it is
    ``objective(problem, .)``.
    """
    if not step > 0:
        raise ContractViolation("finite-difference step must be positive")
    C = np.array(_check_correction(problem, C), dtype=float)
    if func is None:
        func = lambda X: objective(problem, X)  # noqa: E731
    grad = np.empty_like(C)
    for i in range(C.shape[0]):
        for j in range(C.shape[1]):
            orig = C[i, j]
            try:
                C[i, j] = orig + step
                fp = func(C)
                C[i, j] = orig - step
                fm = func(C)
            except SingularOperator as exc:
                raise SingularOperator(f"singular probe at entry ({i}, {j}): {exc}") from exc
            finally:
                C[i, j] = orig
            grad[i, j] = (fp - fm) / (2.0 * step)
    return grad
