"""scikit-learn style front end: ``fit`` resolves a problem, ``predict`` evaluates u."""

from __future__ import annotations

from typing import Optional, Union

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .integrate import IntegratorConfig
from .problem import GridSpec, ProblemCase, builtin_example, case_from_dict
from .reduce import classify_reduced, describe
from .solve import SolutionGrid, solve_on_grid, solve_points


class CharacteristicSolver(BaseEstimator):
    """Solve one PDE problem and evaluate it at arbitrary points.

    ``problem`` is a built-in id (``"E1"`` .. ``"E8"``), a problem document
    (dict) or a :class:`ProblemCase`.  ``fit`` ignores its arguments; the
    data that determine the solution are the problem's initial conditions.
    ``predict`` takes rows ``(x, t)`` and returns u, NaN where the point is
    not ok (see :attr:`status_` after a call).
    """

    def __init__(self, problem: Union[str, dict, ProblemCase] = "E2", rel_tol: float = 1e-9,
                 abs_tol: float = 1e-11, u_max: float = 1e8, threads: Optional[int] = None):
        self.problem = problem
        self.rel_tol = rel_tol
        self.abs_tol = abs_tol
        self.u_max = u_max
        self.threads = threads

    def _resolve(self) -> ProblemCase:
        p = self.problem
        if isinstance(p, ProblemCase):
            return p
        if isinstance(p, dict):
            return case_from_dict(p)
        return builtin_example(p)

    def fit(self, X=None, y=None):
        self.case_ = self._resolve()
        self.config_ = IntegratorConfig(rel_tol=self.rel_tol, abs_tol=self.abs_tol, u_max=self.u_max)
        self.reduction_ = describe(self.case_)
        self.classification_ = classify_reduced(self.case_)
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "case_")
        X = check_array(X, dtype=float, ensure_min_features=2)
        if X.shape[1] != 2:
            raise ValueError(f"expected rows (x, t), got {X.shape[1]} columns")
        u, status = solve_points(self.case_, X[:, 0], X[:, 1], self.config_, self.threads)
        self.status_ = status
        return u

    def solve_grid(self, grid: Optional[GridSpec] = None) -> SolutionGrid:
        check_is_fitted(self, "case_")
        return solve_on_grid(self.case_, grid, self.config_, self.threads)
