"""Exception hierarchy.

Every error class carries the process exit code the command-line front end
uses when the error escapes a run.
"""


class PPSolveError(Exception):
    exit_code = 1


class ParseError(PPSolveError, ValueError):
    """Malformed problem file or expression."""

    exit_code = 2

    def __init__(self, message, line=None, key=None):
        self.line = line
        self.key = key
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key {key!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class DataError(PPSolveError, ValueError):
    exit_code = 3


class DomainError(DataError):
    """A point lies outside the domain of a piecewise polynomial."""


class AccuracyError(PPSolveError, ArithmeticError):
    """Quadrature (or truncation) failed to reach the requested tolerance."""

    exit_code = 4

    def __init__(self, message, error_estimate=None):
        self.error_estimate = error_estimate
        if error_estimate is not None:
            message = f"{message} (error estimate {error_estimate:.3g})"
        super().__init__(message)


class SearchError(PPSolveError, RuntimeError):
    exit_code = 5


class CriterionError(SearchError):
    """The GCV criterion could not be evaluated."""


class ConstraintError(PPSolveError, ValueError):
    exit_code = 6

    def __init__(self, message, residual_norm=None):
        self.residual_norm = residual_norm
        if residual_norm is not None:
            message = f"{message} (residual norm {residual_norm:.3g})"
        super().__init__(message)


class UnsupportedError(PPSolveError, ValueError):
    exit_code = 2
