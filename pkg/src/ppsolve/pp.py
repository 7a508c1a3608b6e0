"""Piecewise polynomials stored in per-piece local coordinates.

Piece ``i`` spans ``[b[i], b[i+1]]`` and its polynomial is written in the
local variable ``u = (2x - b[i] - b[i+1]) / (b[i+1] - b[i])`` which maps the
piece onto ``[-1, 1]``.  Coefficients are stored piece-major, lowest power
first.

The first piece owns both of its endpoints; every later piece owns its right
endpoint only, so ``(b[i], b[i+1]]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as P

from .exceptions import DataError, DomainError, UnsupportedError

MAX_DERIVATIVE_ORDER = 4

__all__ = [
    "MAX_DERIVATIVE_ORDER",
    "Interval",
    "Layout",
    "PiecewisePolynomial",
    "evaluate",
    "evaluate_derivative",
    "sample",
    "uniform_breakpoints",
    "local_basis",
]


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        lo, hi = float(self.lo), float(self.hi)
        if not lo < hi:
            raise DataError(f"interval needs lo < hi, got [{lo}, {hi}]")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def __iter__(self):
        yield self.lo
        yield self.hi


def uniform_breakpoints(domain: Interval, k: int) -> np.ndarray:
    """Return ``k + 1`` equally spaced breakpoints spanning ``domain``."""
    if int(k) != k or k < 1:
        raise ValueError(f"number of pieces must be a positive integer, got {k!r}")
    lo, hi = domain
    b = np.linspace(lo, hi, int(k) + 1)
    b[0], b[-1] = lo, hi
    return b


def _falling(j: np.ndarray, q: int) -> np.ndarray:
    # j (j-1) ... (j-q+1), zero when j < q
    out = np.ones_like(j, dtype=float)
    for r in range(q):
        out *= j - r
    return np.where(j >= q, out, 0.0)


def local_basis(u, degree: int, order: int = 0, scale: float = 1.0) -> np.ndarray:
    """Matrix of ``d^order/dx^order u^j`` for ``j = 0..degree``.

    ``scale`` is ``du/dx`` for the piece, i.e. ``2 / width``.
    """
    u = np.asarray(u, dtype=float).reshape(-1)
    j = np.arange(degree + 1)
    coef = _falling(j, order) * scale**order
    powers = np.clip(j - order, 0, None)
    return coef[None, :] * u[:, None] ** powers[None, :]


class Layout:
    """Breakpoints and per-piece degrees; the column structure of a fit."""

    def __init__(self, breakpoints, degrees):
        b = np.array(breakpoints, dtype=float).reshape(-1)
        d = np.array(degrees, dtype=int).reshape(-1)
        if b.size < 2:
            raise DataError("a layout needs at least two breakpoints")
        if not np.all(np.isfinite(b)):
            raise DataError("breakpoints must be finite")
        if np.any(np.diff(b) <= 0):
            raise DataError("breakpoints must be strictly increasing")
        if d.size != b.size - 1:
            raise DataError(
                f"{b.size - 1} pieces but {d.size} degrees were given"
            )
        if np.any(d < 0):
            raise DataError("degrees must be non-negative")
        b.setflags(write=False)
        d.setflags(write=False)
        self.breakpoints = b
        self.degrees = d
        offsets = np.concatenate([[0], np.cumsum(d + 1)])
        offsets.setflags(write=False)
        self.offsets = offsets

    @property
    def n_pieces(self) -> int:
        return self.degrees.size

    @property
    def n_coef(self) -> int:
        return int(self.offsets[-1])

    @property
    def domain(self) -> Interval:
        return Interval(self.breakpoints[0], self.breakpoints[-1])

    def piece(self, i: int) -> Interval:
        return Interval(self.breakpoints[i], self.breakpoints[i + 1])

    def columns(self, i: int) -> slice:
        return slice(int(self.offsets[i]), int(self.offsets[i + 1]))

    def scale(self, i: int) -> float:
        return 2.0 / (self.breakpoints[i + 1] - self.breakpoints[i])

    def to_local(self, x, i: int):
        lo, hi = self.breakpoints[i], self.breakpoints[i + 1]
        return (2.0 * np.asarray(x, dtype=float) - lo - hi) / (hi - lo)

    def to_global(self, u, i: int):
        lo, hi = self.breakpoints[i], self.breakpoints[i + 1]
        return 0.5 * (lo + hi) + 0.5 * (hi - lo) * np.asarray(u, dtype=float)

    def piece_index(self, x) -> np.ndarray:
        """Owning piece of each point; raises ``DomainError`` outside the domain."""
        x = np.asarray(x, dtype=float)
        lo, hi = self.breakpoints[0], self.breakpoints[-1]
        bad = ~((x >= lo) & (x <= hi))
        if np.any(bad):
            first = np.asarray(x).reshape(-1)[np.argmax(bad.reshape(-1))]
            raise DomainError(f"x = {float(first)!r} lies outside [{lo}, {hi}]")
        idx = np.searchsorted(self.breakpoints, x, side="left") - 1
        return np.clip(idx, 0, self.n_pieces - 1)

    def constant_coefficients(self, value: float = 1.0) -> np.ndarray:
        """Coefficient vector of the constant function ``value``."""
        c = np.zeros(self.n_coef)
        c[self.offsets[:-1]] = value
        return c

    def __eq__(self, other):
        if not isinstance(other, Layout):
            return NotImplemented
        return np.array_equal(self.breakpoints, other.breakpoints) and np.array_equal(
            self.degrees, other.degrees
        )

    def __hash__(self):
        return hash((self.breakpoints.tobytes(), self.degrees.tobytes()))

    def __repr__(self):
        return f"Layout(breakpoints={self.breakpoints.tolist()}, degrees={self.degrees.tolist()})"


class PiecewisePolynomial:
    """Immutable piecewise polynomial in local monomial coordinates.

    Parameters
    ----------
    breakpoints : array_like, shape (k + 1,)
        Strictly increasing piece boundaries.
    degrees : array_like of int, shape (k,)
        Degree of each piece.
    coefficients : array_like, shape (sum(degrees + 1),)
        Piece-major local monomial coefficients, lowest power first.

    Examples
    --------
    >>> pp = PiecewisePolynomial([0.0, 2.0], [1], [0.0, 1.0])
    >>> float(pp(2.0))
    1.0
    """

    def __init__(self, breakpoints, degrees, coefficients):
        layout = breakpoints if isinstance(breakpoints, Layout) else Layout(breakpoints, degrees)
        c = np.array(coefficients, dtype=float).reshape(-1)
        if c.size != layout.n_coef:
            raise DataError(
                f"expected {layout.n_coef} coefficients for degrees "
                f"{layout.degrees.tolist()}, got {c.size}"
            )
        c.setflags(write=False)
        self.layout = layout
        self.coefficients = c

    @classmethod
    def from_layout(cls, layout: Layout, coefficients) -> "PiecewisePolynomial":
        return cls(layout, None, coefficients)

    @property
    def breakpoints(self) -> np.ndarray:
        return self.layout.breakpoints

    @property
    def degrees(self) -> np.ndarray:
        return self.layout.degrees

    @property
    def domain(self) -> Interval:
        return self.layout.domain

    def piece_coefficients(self, i: int) -> np.ndarray:
        return self.coefficients[self.layout.columns(i)]

    def __call__(self, x, order: int = 0):
        return self.derivative(x, order)

    def derivative(self, x, order: int = 0):
        """Evaluate the ``order``-th derivative at ``x`` (scalar or array)."""
        if int(order) != order or order < 0:
            raise UnsupportedError(f"derivative order must be a non-negative integer, got {order!r}")
        if order > MAX_DERIVATIVE_ORDER:
            raise UnsupportedError(
                f"derivative order {order} exceeds the supported maximum {MAX_DERIVATIVE_ORDER}"
            )
        x_arr = np.asarray(x, dtype=float)
        scalar = x_arr.ndim == 0
        flat = x_arr.reshape(-1)
        idx = self.layout.piece_index(flat)
        out = np.empty(flat.shape)
        for i in np.unique(idx):
            mask = idx == i
            c = self.piece_coefficients(i)
            if order:
                c = P.polyder(c, order) if c.size > order else np.zeros(1)
            u = self.layout.to_local(flat[mask], i)
            out[mask] = P.polyval(u, c) * self.layout.scale(i) ** order
        if scalar:
            return float(out[0])
        return out.reshape(x_arr.shape)

    def with_constant_shift(self, delta: float) -> "PiecewisePolynomial":
        """Return ``self + delta``."""
        return PiecewisePolynomial.from_layout(
            self.layout, self.coefficients + self.layout.constant_coefficients(delta)
        )

    def __repr__(self):
        return (
            f"PiecewisePolynomial(breakpoints={self.breakpoints.tolist()}, "
            f"degrees={self.degrees.tolist()})"
        )


def evaluate(pp: PiecewisePolynomial, x: float) -> float:
    return pp.derivative(x, 0)


def evaluate_derivative(pp: PiecewisePolynomial, x: float, order: int) -> float:
    return pp.derivative(x, order)


def sample(pp: PiecewisePolynomial, points) -> np.ndarray:
    points = np.asarray(points, dtype=float).reshape(-1)
    if points.size == 0:
        return np.empty(0)
    return pp.derivative(points, 0)

