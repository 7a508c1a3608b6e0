"""scikit-learn style estimators on top of the solver.

Three estimators share the usual ``fit`` / ``predict`` / ``get_params``
protocol:

``PiecewisePolynomialRegressor``
    Fits ``y`` directly (the identity operator) with the piece/degree search.
``IntegroDifferentialSolver``
    Fits the unknown of an equation to right-hand-side samples ``phi(x)``.
    ``predict(t)`` evaluates the solution; ``apply(x)`` the fitted left-hand side.
``StabilizedInterpolator``
    Single high-degree polynomial with a Tikhonov stabilizer.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import as_domain, as_points, as_samples
from .assembly import DerivativeTerm, EquationSpec, SampleSet, apply_operator
from .constraints import ConstraintSpec
from .exceptions import DataError
from .moments import MomentCache, QuadratureConfig
from .pp import Layout
from .solver import FitReport, RegularizationConfig, SearchConfig, search_fit, stabilized_interpolation

__all__ = ["PiecewisePolynomialRegressor", "IntegroDifferentialSolver", "StabilizedInterpolator"]


class _FittedSolutionMixin:
    """Attributes and ``predict`` shared by the fitted estimators."""

    def _store(self, report: FitReport):
        self.report_ = report
        self.solution_ = report.solution
        self.n_pieces_ = report.pieces
        self.degrees_ = report.degrees
        self.breakpoints_ = np.asarray(report.solution.breakpoints)
        self.coef_ = np.asarray(report.coefficients)
        self.lambda_ = report.lam
        self.n_features_in_ = 1

    def predict(self, X, order: int = 0) -> np.ndarray:
        """Evaluate the fitted piecewise polynomial (or a derivative) at ``X``.

        Raises
        ------
        DomainError
            If a point lies outside the solution domain.
        """
        check_is_fitted(self, "solution_")
        return self.solution_(as_points(X), order)


class PiecewisePolynomialRegressor(_FittedSolutionMixin, RegressorMixin, BaseEstimator):
    """Least-squares piecewise polynomial fit with automatic structure search.

    Parameters
    ----------
    max_pieces : int, default=8
        Largest number of uniform pieces tried.
    n_max : int, default=30
        Largest per-piece degree tried.
    pieces, degrees : optional
        Pin the structure instead of searching.
    continuity : int, default=2
        Derivative order up to which joints are continuous.
    regularize : bool, default=False
        Add a second-derivative stabilizer with GCV-chosen weight.
    lam : float, optional
        Fixed stabilizer weight (implies ``regularize``).
    positivity : bool, default=False
        Constrain the fit to be non-negative.
    domain : (float, float), optional
        Solution interval; defaults to the range of the training abscissae.
    """

    def __init__(self, max_pieces: int = 8, n_max: int = 30, pieces: Optional[int] = None,
                 degrees: Optional[Sequence[int]] = None, continuity: int = 2, regularize: bool = False,
                 lam: Optional[float] = None, positivity: bool = False, domain=None):
        self.max_pieces = max_pieces
        self.n_max = n_max
        self.pieces = pieces
        self.degrees = degrees
        self.continuity = continuity
        self.regularize = regularize
        self.lam = lam
        self.positivity = positivity
        self.domain = domain

    def fit(self, X, y):
        x, v = as_samples(X, y, min_samples=2)
        lo, hi = as_domain(self.domain, x)
        eq = EquationSpec(
            (lo, hi),
            (DerivativeTerm(0),),
            constraints=ConstraintSpec(continuity_order=self.continuity, positivity=self.positivity),
        )
        scfg = SearchConfig(
            max_pieces=self.max_pieces,
            n_max=self.n_max,
            pieces=self.pieces,
            degrees=None if self.degrees is None else tuple(self.degrees),
        )
        active = bool(self.regularize or self.lam is not None)
        rcfg = RegularizationConfig(enabled=active, lam=self.lam)
        self._store(search_fit(eq, SampleSet(x, v), scfg, rcfg))
        return self


class IntegroDifferentialSolver(_FittedSolutionMixin, BaseEstimator):
    """Solve a linear integro-differential equation from samples of its right-hand side.

    Parameters
    ----------
    equation : EquationSpec
        Operator, domain and side conditions.
    search : SearchConfig, optional
    regularization : RegularizationConfig, optional
    quadrature : QuadratureConfig, optional

    Examples
    --------
    >>> import numpy as np
    >>> from ppsolve import EquationSpec, DerivativeTerm, ConstraintSpec
    >>> eq = EquationSpec((0.0, 1.0), (DerivativeTerm(1), DerivativeTerm(0)),
    ...                   constraints=ConstraintSpec(initial=(1.0,)))
    >>> x = np.linspace(0, 1, 50)
    >>> s = IntegroDifferentialSolver(eq, SearchConfig(degrees=(12,))).fit(x, np.zeros_like(x))
    >>> bool(abs(s.predict([1.0])[0] - np.exp(-1)) < 1e-9)
    True
    """

    def __init__(self, equation: EquationSpec, search: Optional[SearchConfig] = None,
                 regularization: Optional[RegularizationConfig] = None,
                 quadrature: Optional[QuadratureConfig] = None):
        self.equation = equation
        self.search = search
        self.regularization = regularization
        self.quadrature = quadrature

    def fit(self, X, y):
        """Fit to right-hand-side samples ``y = phi(X)``."""
        if not isinstance(self.equation, EquationSpec):
            raise DataError("equation must be an EquationSpec")
        x, v = as_samples(X, y, min_samples=1)
        self._cache = MomentCache()
        self._qcfg = self.quadrature or QuadratureConfig()
        report = search_fit(self.equation, SampleSet(x, v), self.search or SearchConfig(),
                            self.regularization or RegularizationConfig(), self._qcfg, self._cache)
        self._store(report)
        return self

    def apply(self, X) -> np.ndarray:
        """Left-hand side of the equation evaluated for the fitted solution."""
        check_is_fitted(self, "solution_")
        sol = self.solution_
        return apply_operator(self.equation, sol.coefficients, Layout(sol.breakpoints, sol.degrees),
                              as_points(X), self._qcfg, self._cache)

    def score(self, X, y) -> float:
        """Coefficient of determination of ``apply(X)`` against ``y``."""
        from sklearn.metrics import r2_score

        return float(r2_score(np.asarray(y, dtype=float).reshape(-1), self.apply(X)))


class StabilizedInterpolator(_FittedSolutionMixin, RegressorMixin, BaseEstimator):
    """One polynomial of fixed degree with a Tikhonov stabilizer.

    With ``lam=0`` this is classical interpolation (or least squares when
    there are more points than coefficients); otherwise the weight is fixed
    or chosen by GCV.

    Parameters
    ----------
    degree : int
    lam : float, optional
        Fixed weight; ``None`` selects it by GCV.
    stabilizer : {"value", "second_derivative", "identity"}
    stabilizer_points : int, default=1000
        Number of uniform points where the stabilizer is sampled.
    lambda_grid : sequence of float, optional
    """

    def __init__(self, degree: int = 20, lam: Optional[float] = None, stabilizer: str = "value",
                 stabilizer_points: int = 1000, lambda_grid: Optional[Sequence[float]] = None):
        self.degree = degree
        self.lam = lam
        self.stabilizer = stabilizer
        self.stabilizer_points = stabilizer_points
        self.lambda_grid = lambda_grid

    def fit(self, X, y):
        x, v = as_samples(X, y, min_samples=2)
        rcfg = RegularizationConfig(
            stabilizer=self.stabilizer,
            stabilizer_points=self.stabilizer_points,
            lambda_grid=None if self.lambda_grid is None else tuple(self.lambda_grid),
            lam=self.lam,
        )
        self._store(stabilized_interpolation(x, v, int(self.degree), rcfg))
        return self
