"""scikit-learn style wrapper around the correction solver.

Samples are rows, as scikit-learn expects: ``X`` holds one control vector
per row and ``y`` the matching observed state entries. The solver itself
works on column-stacked matrices, so the wrapper transposes at the boundary.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import linalg
from .frank_wolfe import SolverConfig, solve
from .objective import CorrectionProblem, ObservationSelector, TrainingSet, observe


class LowRankCorrection(RegressorMixin, BaseEstimator):
    """Learn an additive correction ``C`` so that ``(M + C)^{-1}`` reproduces data.

    Parameters
    ----------
    operator : (n, n) array-like
        The misspecified model ``M``; must be invertible.
    observed_indices : sequence of int, optional
        State entries that ``y`` observes, in column order of ``y``.
        Defaults to all ``n`` entries.
    lam : float, default=1.0
        Weight on ``||(M + C)^{-1}||_F^2``, the conditioning penalty.
    delta : float, optional
        Nuclear-norm budget for ``C``. When omitted it is
        ``delta_fraction * ||M||_*``.
    delta_fraction : float, default=0.1
    max_iterations, relative_gap_tolerance, step_rule, lmo_method
        Forwarded to :class:`~opcorrect.frank_wolfe.SolverConfig`.

    Attributes
    ----------
    correction_ : ndarray of shape (n, n)
    corrected_operator_ : ndarray of shape (n, n)
    delta_ : float
    n_iter_ : int
    termination_ : str
    solve_result_ : SolveResult
    """

    def __init__(
        self,
        operator=None,
        observed_indices=None,
        lam=1.0,
        delta=None,
        delta_fraction=0.1,
        max_iterations=500,
        relative_gap_tolerance=1e-6,
        step_rule="backtracking_line_search",
        lmo_method="full_svd",
    ):
        self.operator = operator
        self.observed_indices = observed_indices
        self.lam = lam
        self.delta = delta
        self.delta_fraction = delta_fraction
        self.max_iterations = max_iterations
        self.relative_gap_tolerance = relative_gap_tolerance
        self.step_rule = step_rule
        self.lmo_method = lmo_method

    def _selector(self, n):
        if self.observed_indices is None:
            return ObservationSelector.full(n)
        return ObservationSelector(n, tuple(self.observed_indices))

    def _problem(self, X, y):
        if self.operator is None:
            raise ValueError("operator (the misspecified model M) is required")
        M = linalg.as_operator(self.operator, "operator", square=True)
        n = M.shape[0]
        if X.shape[1] != n:
            raise ValueError(f"X has {X.shape[1]} features, operator is {n}x{n}")
        sel = self._selector(n)
        if y.shape[1] != sel.n_obs:
            raise ValueError(f"y has {y.shape[1]} columns, {sel.n_obs} entries are observed")
        delta = self.delta if self.delta is not None else self.delta_fraction * linalg.nuclear_norm(M)
        return CorrectionProblem(M, sel, TrainingSet(X.T, y.T), float(self.lam), float(delta))

    def fit(self, X, y):
        X, y = check_X_y(X, y, multi_output=True, y_numeric=True)
        if y.ndim == 1:
            y = y[:, None]
        problem = self._problem(X, y)
        config = SolverConfig(
            max_iterations=self.max_iterations,
            relative_gap_tolerance=self.relative_gap_tolerance,
            step_rule=self.step_rule,
            lmo_method=self.lmo_method,
        )
        result = solve(problem, config)
        self.solve_result_ = result
        self.correction_ = result.correction
        self.corrected_operator_ = problem.M + result.correction
        self.delta_ = problem.delta
        self.n_iter_ = result.iterations_run
        self.termination_ = result.termination
        self.n_features_in_ = X.shape[1]
        self._single_output = y.shape[1] == 1
        return self

    def predict_state(self, X):
        """Full corrected state ``(M + C)^{-1} x`` for each row of ``X``."""
        check_is_fitted(self, "correction_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return linalg.solve(self.corrected_operator_, X.T).T

    def predict(self, X):
        states = self.predict_state(X)
        obs = observe(self._selector(self.n_features_in_), states.T).T
        return obs[:, 0] if self._single_output else obs

    def inverse_error(self, X, y):
        """Squared Frobenius misfit of the observed predictions."""
        pred = self.predict(X)
        return float(np.sum((pred - np.asarray(y, dtype=float)) ** 2))

    def condition_number(self):
        check_is_fitted(self, "correction_")
        return linalg.condition_number(self.corrected_operator_)
