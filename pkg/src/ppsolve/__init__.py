"""Least-squares solutions of linear integro-differential equations as piecewise polynomials.

The unknown ``y`` is a piecewise polynomial whose coefficients are fitted
to sampled right-hand-side data.  Derivative terms, Fredholm and Volterra
integrals, equality constraints, positivity, and Tikhonov regularization
with GCV are supported, together with an automatic search over the number
of pieces and their degrees.

>>> import numpy as np
>>> from ppsolve import PiecewisePolynomialRegressor
>>> x = np.linspace(-1, 1, 200)
>>> reg = PiecewisePolynomialRegressor(max_pieces=2, n_max=8).fit(x, x**3)
>>> float(abs(reg.predict([0.5])[0] - 0.125)) < 1e-10
True
"""

__version__ = "1.0.0"

from .assembly import DerivativeTerm, EquationSpec, SampleSet, apply_operator, assemble
from .constraints import ConstraintSpec
from .estimator import IntegroDifferentialSolver, PiecewisePolynomialRegressor, StabilizedInterpolator
from .examples import REGISTRY, get_example, list_examples, synthesize
from .exceptions import (
    AccuracyError,
    ConstraintError,
    CriterionError,
    DataError,
    DomainError,
    ParseError,
    PPSolveError,
    SearchError,
    UnsupportedError,
)
from .moments import IntegralTerm, Kernel, MomentCache, QuadratureConfig
from .pp import Interval, Layout, PiecewisePolynomial
from .problem import ProblemFile, load_csv, parse_problem, pretty_print, read_problem
from .solver import FitReport, RegularizationConfig, SearchConfig, search_fit, stabilized_interpolation

__all__ = [
    "__version__",
    "AccuracyError",
    "ConstraintError",
    "ConstraintSpec",
    "CriterionError",
    "DataError",
    "DerivativeTerm",
    "DomainError",
    "EquationSpec",
    "FitReport",
    "IntegralTerm",
    "IntegroDifferentialSolver",
    "Interval",
    "Kernel",
    "Layout",
    "MomentCache",
    "ParseError",
    "PiecewisePolynomial",
    "PiecewisePolynomialRegressor",
    "PPSolveError",
    "ProblemFile",
    "QuadratureConfig",
    "REGISTRY",
    "RegularizationConfig",
    "SampleSet",
    "SearchConfig",
    "SearchError",
    "StabilizedInterpolator",
    "UnsupportedError",
    "apply_operator",
    "assemble",
    "get_example",
    "list_examples",
    "load_csv",
    "parse_problem",
    "pretty_print",
    "read_problem",
    "search_fit",
    "stabilized_interpolation",
    "synthesize",
]
