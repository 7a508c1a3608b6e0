"""Equality constraints on coefficients and their elimination.

Initial, boundary, and joint-continuity conditions are linear in the
coefficients, ``C c = d``.  They are removed from the fit by writing
``c = T c_free + s`` with ``T`` an orthonormal basis of ``null(C)`` and ``s``
the minimum-norm particular solution.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import scipy.linalg

from .exceptions import ConstraintError
from .pp import MAX_DERIVATIVE_ORDER, Layout, local_basis

logger = logging.getLogger(__name__)

RANK_TOL = 1e-10


@dataclass(frozen=True)
class ConstraintSpec:
    """Declared side conditions.

    ``initial`` is ``(y0,)`` or ``(y0, y1)`` imposed at the left end of the
    domain; ``boundary`` is ``(y_alpha, y_beta)``.  The two are exclusive.
    """

    initial: Optional[Tuple[float, ...]] = None
    boundary: Optional[Tuple[float, float]] = None
    continuity_order: int = 2
    positivity: bool = False

    def __post_init__(self):
        if self.initial is not None and self.boundary is not None:
            raise ConstraintError("initial and boundary conditions are mutually exclusive")
        if self.initial is not None:
            init = tuple(float(v) for v in self.initial if v is not None)
            if not 1 <= len(init) <= 2:
                raise ConstraintError("initial conditions take one or two values (y0[, y1])")
            object.__setattr__(self, "initial", init)
        if self.boundary is not None:
            bnd = tuple(float(v) for v in self.boundary)
            if len(bnd) != 2:
                raise ConstraintError("boundary conditions take exactly two values")
            object.__setattr__(self, "boundary", bnd)
        if not 0 <= self.continuity_order <= MAX_DERIVATIVE_ORDER:
            raise ConstraintError(
                f"continuity_order must lie in 0..{MAX_DERIVATIVE_ORDER}, got {self.continuity_order}"
            )

    @property
    def n_conditions(self) -> int:
        if self.initial is not None:
            return len(self.initial)
        return 2 if self.boundary is not None else 0


@dataclass(frozen=True)
class AffineReduction:
    T: np.ndarray
    s: np.ndarray
    C: np.ndarray
    d: np.ndarray

    @property
    def n_free(self) -> int:
        return self.T.shape[1]


def _row(layout: Layout, x: float, order: int) -> np.ndarray:
    row = np.zeros(layout.n_coef)
    i = int(layout.piece_index(np.array([x]))[0])
    u = layout.to_local(x, i)
    row[layout.columns(i)] = local_basis([u], int(layout.degrees[i]), order, layout.scale(i))[0]
    return row


def _piece_row(layout: Layout, i: int, u: float, order: int) -> np.ndarray:
    row = np.zeros(layout.n_coef)
    row[layout.columns(i)] = local_basis([u], int(layout.degrees[i]), order, layout.scale(i))[0]
    return row


def effective_continuity(spec: ConstraintSpec, layout: Layout) -> int:
    """Continuity order clamped to the smallest piece degree."""
    order = spec.continuity_order
    if layout.n_pieces > 1:
        min_deg = int(layout.degrees.min())
        if order > min_deg:
            warnings.warn(
                f"continuity order {order} exceeds the smallest piece degree {min_deg}; clamped",
                stacklevel=3,
            )
            order = min_deg
    return order


def constraint_rows(spec: ConstraintSpec, layout: Layout, affine_shift: float = 0.0):
    """Build ``(C, d)`` for the declared conditions and joint continuity.

    Value conditions are shifted by ``affine_shift`` because the fit works with
    ``z = y + affine_shift``.
    """
    rows, rhs = [], []
    lo, hi = layout.breakpoints[0], layout.breakpoints[-1]
    if spec.initial is not None:
        for order, value in enumerate(spec.initial):
            rows.append(_row(layout, lo, order))
            rhs.append(value + (affine_shift if order == 0 else 0.0))
    if spec.boundary is not None:
        for x, value in zip((lo, hi), spec.boundary):
            rows.append(_row(layout, x, 0))
            rhs.append(value + affine_shift)
    if layout.n_pieces > 1:
        order = effective_continuity(spec, layout)
        for i in range(layout.n_pieces - 1):
            for q in range(order + 1):
                rows.append(_piece_row(layout, i, 1.0, q) - _piece_row(layout, i + 1, -1.0, q))
                rhs.append(0.0)
    if not rows:
        return np.zeros((0, layout.n_coef)), np.zeros(0)
    return np.array(rows), np.array(rhs, dtype=float)


def nullspace_reduction(C, d) -> AffineReduction:
    """Orthonormal null-space parametrisation of ``C c = d``.

    Rows are equilibrated before the SVD; rows that are numerically dependent
    (singular values below ``1e-10`` times the largest) are dropped, and an
    inconsistent right-hand side raises ``ConstraintError``.
    """
    C = np.atleast_2d(np.asarray(C, dtype=float))
    d = np.asarray(d, dtype=float).reshape(-1)
    n = C.shape[1]
    if C.shape[0] == 0:
        return AffineReduction(np.eye(n), np.zeros(n), C.reshape(0, n), d.reshape(0))
    if C.shape[0] != d.size:
        raise ConstraintError(f"C has {C.shape[0]} rows but d has {d.size} entries")
    norms = np.linalg.norm(C, axis=1)
    norms[norms == 0] = 1.0
    Cs, ds = C / norms[:, None], d / norms
    U, sv, Vt = scipy.linalg.svd(Cs, full_matrices=True)
    rank = int(np.sum(sv > RANK_TOL * sv[0])) if sv.size and sv[0] > 0 else 0
    if rank < C.shape[0]:
        logger.info("dropping %d dependent constraint rows", C.shape[0] - rank)
    beta = U[:, :rank].T @ ds
    s = Vt[:rank].T @ (beta / sv[:rank])
    resid = float(np.linalg.norm(Cs @ s - ds))
    if resid > 1e-8 * max(1.0, float(np.linalg.norm(ds))):
        raise ConstraintError("inconsistent constraints", residual_norm=resid)
    T = Vt[rank:].T.copy()
    return AffineReduction(T, s, C, d)


def reduce_system(A, phi, red: AffineReduction):
    """Return ``(A T, phi - A s)``."""
    A = np.asarray(A, dtype=float)
    return A @ red.T, np.asarray(phi, dtype=float) - A @ red.s


def expand_solution(red: AffineReduction, c_free) -> np.ndarray:
    c_free = np.asarray(c_free, dtype=float).reshape(-1)
    if c_free.size != red.T.shape[1]:
        raise ValueError(f"expected {red.T.shape[1]} free coefficients, got {c_free.size}")
    return red.T @ c_free + red.s
