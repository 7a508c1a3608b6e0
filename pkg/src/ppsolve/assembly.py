"""Design-matrix assembly for linear integro-differential equations.

The equation is

    sum_q g_q(x) y^(q)(x) + sum_terms h(x) ∫ K(x, t) y(t) dt = phi(x)

and every term becomes a matrix acting on the stacked piece coefficients.
Rows of each block are scaled by the term's multiplier at the data
abscissae, then the blocks are summed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .constraints import ConstraintSpec
from .exceptions import DataError
from .moments import IntegralTerm, MomentCache, QuadratureConfig
from .pp import MAX_DERIVATIVE_ORDER, Interval, Layout, local_basis

__all__ = [
    "DerivativeTerm",
    "EquationSpec",
    "SampleSet",
    "DesignSystem",
    "evaluation_block",
    "fredholm_block",
    "volterra_block",
    "assemble",
]


def as_function(value) -> Callable:
    """Wrap a constant as a vectorised function of ``x``."""
    if callable(value):
        return value
    c = float(value)
    return lambda x: np.full(np.shape(x), c)


@dataclass(frozen=True, eq=False)
class DerivativeTerm:
    order: int
    multiplier: Callable = 1.0
    multiplier_source: Optional[str] = None

    def __post_init__(self):
        if int(self.order) != self.order or not 0 <= self.order <= MAX_DERIVATIVE_ORDER:
            raise DataError(f"derivative order must lie in 0..{MAX_DERIVATIVE_ORDER}")
        object.__setattr__(self, "multiplier", as_function(self.multiplier))


@dataclass(frozen=True, eq=False)
class EquationSpec:
    domain: Interval
    derivative_terms: Sequence[DerivativeTerm] = ()
    integral_terms: Sequence[IntegralTerm] = ()
    constraints: ConstraintSpec = field(default_factory=ConstraintSpec)
    affine_shift: float = 0.0

    def __post_init__(self):
        dom = self.domain if isinstance(self.domain, Interval) else Interval(*self.domain)
        object.__setattr__(self, "domain", dom)
        terms = tuple(
            t if isinstance(t, DerivativeTerm) else DerivativeTerm(*t) for t in self.derivative_terms
        )
        object.__setattr__(self, "derivative_terms", terms)
        object.__setattr__(self, "integral_terms", tuple(self.integral_terms))
        if not terms and not self.integral_terms:
            raise DataError("an equation needs at least one term")
        orders = [t.order for t in terms]
        if len(set(orders)) != len(orders):
            raise DataError(f"derivative orders must be distinct, got {orders}")
        for term in self.integral_terms:
            if term.term_type == "volterra" and term.lower > dom.lo:
                raise DataError(
                    f"volterra lower limit {term.lower} lies above the solution domain start {dom.lo}"
                )
        if self.constraints.initial is not None and orders and len(self.constraints.initial) > max(
            max(orders), 1
        ):
            raise DataError("more initial conditions than the highest derivative order")

    @property
    def max_derivative_order(self) -> int:
        return max((t.order for t in self.derivative_terms), default=0)

    @property
    def is_first_kind(self) -> bool:
        """No term acts on ``y`` pointwise: only integrals of the unknown appear."""
        return not self.derivative_terms


@dataclass(frozen=True, eq=False)
class SampleSet:
    abscissae: np.ndarray
    values: np.ndarray
    noise_sigma: Optional[float] = None

    def __post_init__(self):
        x = np.array(self.abscissae, dtype=float).reshape(-1)
        y = np.array(self.values, dtype=float).reshape(-1)
        if x.size != y.size:
            raise DataError(f"{x.size} abscissae but {y.size} values")
        if x.size == 0:
            raise DataError("empty sample set")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise DataError("sample set contains non-finite values")
        if np.any(np.diff(x) <= 0):
            raise DataError("abscissae must be strictly increasing")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "abscissae", x)
        object.__setattr__(self, "values", y)

    @property
    def m(self) -> int:
        return self.abscissae.size


@dataclass(frozen=True, eq=False)
class DesignSystem:
    matrix: np.ndarray
    rhs: np.ndarray
    layout: Layout


def evaluation_block(points, layout: Layout, order: int = 0) -> np.ndarray:
    """Rows of ``d^order/dx^order`` of the local monomials of the owning piece."""
    if not 0 <= order <= MAX_DERIVATIVE_ORDER:
        raise DataError(f"derivative order must lie in 0..{MAX_DERIVATIVE_ORDER}")
    points = np.asarray(points, dtype=float).reshape(-1)
    out = np.zeros((points.size, layout.n_coef))
    if points.size == 0:
        return out
    idx = layout.piece_index(points)
    for i in np.unique(idx):
        rows = np.flatnonzero(idx == i)
        u = layout.to_local(points[rows], i)
        out[np.ix_(rows, np.arange(layout.offsets[i], layout.offsets[i + 1]))] = local_basis(
            u, int(layout.degrees[i]), order, layout.scale(i)
        )
    return out


def _moment_block(term, abscissae, layout, cfg, cache, n_powers):
    x = np.ascontiguousarray(np.asarray(abscissae, dtype=float).reshape(-1))
    cache = cache if cache is not None else MomentCache()
    blocks = []
    for i in range(layout.n_pieces):
        need = int(layout.degrees[i]) + 1
        tab = cache.table(term, x, layout.piece(i), max(need, n_powers or 0), cfg)
        blocks.append(tab[:, :need])
    return np.hstack(blocks)


def fredholm_block(term: IntegralTerm, abscissae, layout: Layout, cfg: QuadratureConfig = QuadratureConfig(),
                   cache: Optional[MomentCache] = None, n_powers: Optional[int] = None) -> np.ndarray:
    """Moments ``∫_{piece ∩ [a, b]} K(x_i, t) u^j dt`` for every row and column.

    The solution is taken to vanish outside the layout's domain.
    ``n_powers`` asks the cache to compute (and keep) that many powers per
    piece so later layouts with higher degrees reuse the work.
    """
    if term.term_type != "fredholm":
        raise DataError("fredholm_block needs a fredholm term")
    return _moment_block(term, abscissae, layout, cfg, cache, n_powers)


def volterra_block(term: IntegralTerm, abscissae, layout: Layout, cfg: QuadratureConfig = QuadratureConfig(),
                   cache: Optional[MomentCache] = None, n_powers: Optional[int] = None) -> np.ndarray:
    """Moments over ``piece ∩ [a, x_i]``; zero for pieces above ``x_i``."""
    if term.term_type != "volterra":
        raise DataError("volterra_block needs a volterra term")
    x = np.asarray(abscissae, dtype=float)
    hi = layout.breakpoints[-1]
    if np.any(x > hi):
        raise DataError(
            f"abscissa {float(x[x > hi][0])!r} exceeds the solution domain end {hi}; "
            "a volterra term needs y up to x"
        )
    return _moment_block(term, abscissae, layout, cfg, cache, n_powers)


def _scaled(mult, x, block, what):
    w = np.asarray(mult(x), dtype=float)
    w = np.broadcast_to(w, x.shape)
    bad = ~np.isfinite(w)
    if np.any(bad):
        raise DataError(f"{what} multiplier is not finite at x = {float(x[bad][0])!r}")
    return w[:, None] * block


def assemble(eq: EquationSpec, data: SampleSet, layout: Layout, cfg: QuadratureConfig = QuadratureConfig(),
             cache: Optional[MomentCache] = None, n_powers: Optional[int] = None) -> DesignSystem:
    """Assemble ``A`` and the right-hand side for one layout.

    With an affine shift ``delta`` the unknown becomes ``z = y + delta`` and
    the right-hand side gains ``delta * A @ 1`` (the operator applied to the
    constant one).
    """
    x = data.abscissae
    A = np.zeros((x.size, layout.n_coef))
    for term in eq.derivative_terms:
        A += _scaled(term.multiplier, x, evaluation_block(x, layout, term.order), f"order-{term.order}")
    for term in eq.integral_terms:
        if term.term_type == "fredholm":
            block = fredholm_block(term, x, layout, cfg, cache, n_powers)
        else:
            block = volterra_block(term, x, layout, cfg, cache, n_powers)
        A += _scaled(term.multiplier, x, block, f"{term.term_type} term")
    if not np.all(np.isfinite(A)):
        row = int(np.argmax(~np.all(np.isfinite(A), axis=1)))
        raise DataError(f"design matrix is not finite at x = {float(x[row])!r}")
    rhs = np.array(data.values, dtype=float)
    if eq.affine_shift:
        rhs = rhs + eq.affine_shift * (A @ layout.constant_coefficients(1.0))
    return DesignSystem(A, rhs, layout)


def apply_operator(eq: EquationSpec, coefficients, layout: Layout, points,
                   cfg: QuadratureConfig = QuadratureConfig(), cache: Optional[MomentCache] = None):
    """Left-hand side of the equation for the function with these coefficients."""
    dummy = SampleSet(np.asarray(points, dtype=float), np.zeros(np.size(points)))
    sys = assemble(
        EquationSpec(eq.domain, eq.derivative_terms, eq.integral_terms, eq.constraints, 0.0),
        dummy,
        layout,
        cfg,
        cache,
    )
    return sys.matrix @ np.asarray(coefficients, dtype=float)
