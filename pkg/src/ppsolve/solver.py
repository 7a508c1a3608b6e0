"""Least-squares and Tikhonov solvers, GCV, and the piece/degree search."""

from __future__ import annotations

import logging
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
import scipy.optimize

from .assembly import EquationSpec, SampleSet, assemble, evaluation_block
from .constraints import (
    AffineReduction,
    constraint_rows,
    effective_continuity,
    expand_solution,
    nullspace_reduction,
    reduce_system,
)
from .exceptions import CriterionError, SearchError
from .moments import MomentCache, QuadratureConfig
from .pp import Layout, PiecewisePolynomial, uniform_breakpoints

logger = logging.getLogger(__name__)

STABILIZERS = ("none", "identity", "value", "second_derivative")
_EPS = np.finfo(float).eps


def default_lambda_grid() -> np.ndarray:
    return np.logspace(-16, 2, 60)


@dataclass(frozen=True)
class RegularizationConfig:
    """Tikhonov settings.

    ``enabled=None`` regularizes first-kind equations (no term acts on ``y``
    pointwise) and leaves every other equation unregularized.  ``lam`` pins
    the parameter; otherwise it is chosen by GCV over ``lambda_grid``.  With
    ``relative_grid`` the grid is multiplied by ``||M||_F^2 / ||L||_F^2`` of
    each candidate system, which makes the grid independent of how the
    equation is scaled.
    """

    stabilizer: str = "second_derivative"
    stabilizer_points: Optional[int] = None
    lambda_grid: Optional[Tuple[float, ...]] = None
    criterion: str = "gcv"
    enabled: Optional[bool] = None
    lam: Optional[float] = None
    relative_grid: bool = True

    def __post_init__(self):
        if self.stabilizer not in STABILIZERS:
            raise ValueError(f"stabilizer must be one of {STABILIZERS}, got {self.stabilizer!r}")
        if self.criterion != "gcv":
            raise ValueError(f"unsupported criterion {self.criterion!r}")
        if self.lam is not None and self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if self.lambda_grid is not None:
            grid = tuple(float(v) for v in self.lambda_grid)
            if not grid:
                raise ValueError("lambda grid is empty")
            object.__setattr__(self, "lambda_grid", grid)
        if self.stabilizer_points is not None and self.stabilizer_points < 1:
            raise ValueError("stabilizer_points must be positive")

    def grid(self) -> np.ndarray:
        return np.asarray(self.lambda_grid) if self.lambda_grid is not None else default_lambda_grid()

    def is_active(self, eq: Optional[EquationSpec] = None) -> bool:
        if self.stabilizer == "none":
            return False
        if self.enabled is not None:
            return self.enabled
        return bool(eq is not None and eq.is_first_kind)


@dataclass(frozen=True)
class SearchConfig:
    """Structure search settings.

    ``pieces`` and ``degrees`` pin the structure (``degrees`` implies
    ``pieces``).  A candidate is feasible when ``m >= oversampling * N``.
    """

    max_pieces: int = 8
    n_max: int = 30
    degree_grid: Optional[Tuple[int, ...]] = None
    tie_tolerance: float = 1e-3
    min_degree: int = 3
    pieces: Optional[int] = None
    degrees: Optional[Tuple[int, ...]] = None
    stagnation_tol: float = 1e-2
    stagnation_window: int = 3
    max_sweeps: int = 3
    oversampling: float = 1.0
    positivity_grid: Optional[int] = None

    def __post_init__(self):
        if self.max_pieces < 1 or self.n_max < 1:
            raise ValueError("max_pieces and n_max must be at least 1")
        if self.degrees is not None:
            degs = tuple(int(d) for d in self.degrees)
            if self.pieces is not None and self.pieces != len(degs):
                raise ValueError("pinned pieces and degrees disagree")
            object.__setattr__(self, "degrees", degs)
        if self.degree_grid is not None:
            object.__setattr__(self, "degree_grid", tuple(sorted(int(d) for d in self.degree_grid)))
        if self.pieces is not None and self.pieces < 1:
            raise ValueError("pieces must be at least 1")
        if self.oversampling <= 0:
            raise ValueError("oversampling must be positive")

    def grid_for(self, k: int) -> Tuple[int, ...]:
        if self.degree_grid is not None:
            return tuple(d for d in self.degree_grid if d <= self.n_max)
        lo = min(self.min_degree, self.n_max)
        return tuple(range(lo, self.n_max + 1, 1 if k == 1 else 2))


@dataclass
class FitReport:
    solution: PiecewisePolynomial
    pieces: int
    degrees: Tuple[int, ...]
    lam: float
    residual_norm: float
    gcv_score: Optional[float]
    constraint_residual: float
    condition_estimate: float
    regularized: bool = False
    rank_deficient: bool = False
    candidates_evaluated: int = 0
    near_ties: List[Tuple[int, Tuple[int, ...], float]] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)
    positivity_converged: Optional[bool] = None

    @property
    def coefficients(self) -> np.ndarray:
        return self.solution.coefficients

    def summary(self) -> str:
        lines = [
            f"pieces: {self.pieces}",
            f"degrees: {' '.join(str(d) for d in self.degrees)}",
            f"breakpoints: {' '.join(repr(float(b)) for b in self.solution.breakpoints)}",
            f"lambda: {self.lam!r}",
            f"regularized: {self.regularized}",
            f"residual_norm: {self.residual_norm!r}",
            f"gcv_score: {self.gcv_score!r}",
            f"constraint_residual: {self.constraint_residual!r}",
            f"condition_estimate: {self.condition_estimate:.6g}",
            f"rank_deficient: {self.rank_deficient}",
            f"candidates_evaluated: {self.candidates_evaluated}",
        ]
        if self.positivity_converged is not None:
            lines.append(f"positivity_converged: {self.positivity_converged}")
        for k, degs, obj in self.near_ties:
            lines.append(f"near_tie: pieces={k} degrees={' '.join(map(str, degs))} objective={obj!r}")
        for w in self.warnings:
            lines.append(f"warning: {w}")
        return "\n".join(lines)


# --------------------------------------------------------------------------
# dense solvers


def _equilibrate(A):
    norms = np.linalg.norm(A, axis=0)
    norms[norms == 0] = 1.0
    return 1.0 / norms


def _lstsq(A, b):
    """Minimum-norm least squares on column-equilibrated ``A``; returns ``(x, rank)``."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.shape[1] == 0:
        return np.zeros(0), 0
    D = _equilibrate(A)
    x, _, rank, _ = scipy.linalg.lstsq(A * D, b, lapack_driver="gelsd", check_finite=False)
    return D * x, int(rank)


def least_squares(A, b) -> np.ndarray:
    """Minimiser of ``||A x - b||``.

    Rank deficiency is not an error: the minimum-norm solution is returned
    and a ``RuntimeWarning`` is issued.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    x, rank = _lstsq(A, b)
    if rank < min(A.shape):
        warnings.warn(f"rank-deficient least squares (rank {rank} of {A.shape[1]})", RuntimeWarning,
                      stacklevel=2)
    return x


def tikhonov_solve(M, phi, L, lam: float) -> np.ndarray:
    """Minimiser of ``||M c - phi||^2 + lam ||L c||^2`` via the stacked system."""
    if lam < 0:
        raise ValueError(f"lambda must be non-negative, got {lam}")
    M = np.atleast_2d(np.asarray(M, dtype=float))
    L = np.atleast_2d(np.asarray(L, dtype=float))
    if L.shape[1] != M.shape[1]:
        raise ValueError("L and M must have the same number of columns")
    if lam == 0:
        return _lstsq(M, phi)[0]
    stacked = np.vstack([M, np.sqrt(lam) * L])
    rhs = np.concatenate([np.asarray(phi, dtype=float), np.zeros(L.shape[0])])
    return _lstsq(stacked, rhs)[0]


class TikhonovFactorization:
    """Joint factorization of ``(M, L)`` shared across a lambda sweep.

    ``[M; L] D = [Q1; Q2] R`` (thin QR after column equilibration ``D``),
    ``Q1 = U diag(c) W^T``.  Then ``M^T M + lam L^T L = D^-1 R^T W diag(c^2 +
    lam s^2) W^T R D^-1`` with ``s_i = ||Q2 w_i||``, so the solution and the
    influence matrix ``U diag(c^2 / (c^2 + lam s^2)) U^T`` are available in
    closed form for every ``lam``.
    """

    def __init__(self, M, L):
        M = np.atleast_2d(np.asarray(M, dtype=float))
        L = np.atleast_2d(np.asarray(L, dtype=float))
        if L.shape[1] != M.shape[1]:
            raise ValueError("L and M must have the same number of columns")
        self.m, self.n = M.shape
        self.D = _equilibrate(np.vstack([M, L]))
        Q, R = scipy.linalg.qr(np.vstack([M, L]) * self.D, mode="economic", check_finite=False)
        diag = np.abs(np.diag(R))
        self.full_rank = bool(diag.size == 0 or diag.min() > 1e3 * _EPS * diag.max())
        Q1, Q2 = Q[: self.m], Q[self.m:]
        U, c, Wt = scipy.linalg.svd(Q1, full_matrices=False, check_finite=False)
        self.U, self.c, self.W = U, c, Wt.T
        self.s = np.linalg.norm(Q2 @ self.W, axis=0)
        self.R = R
        self.scale = (np.linalg.norm(M) / max(np.linalg.norm(L), 1e-300)) ** 2

    def filter_factors(self, lam: float) -> np.ndarray:
        c2, s2 = self.c**2, self.s**2
        if lam == 0:
            return np.where(c2 > 0, 1.0, 0.0)
        denom = c2 + lam * s2
        return np.divide(c2, denom, out=np.zeros_like(c2), where=denom > 0)

    def solve(self, phi, lam: float) -> np.ndarray:
        c2, s2 = self.c**2, self.s**2
        denom = c2 + lam * s2
        if lam == 0:
            keep = self.c > 1e3 * _EPS * max(self.c.max(initial=0.0), 1e-300)
            g = np.where(keep, 1.0 / np.where(keep, self.c, 1.0), 0.0)
        else:
            g = np.divide(self.c, denom, out=np.zeros_like(denom), where=denom > 0)
        z = self.W @ (g * (self.U.T @ np.asarray(phi, dtype=float)))
        x = scipy.linalg.solve_triangular(self.R, z, check_finite=False) if self.full_rank else (
            np.linalg.lstsq(self.R, z, rcond=None)[0]
        )
        return self.D * x

    def residual_sq(self, phi, lam: float) -> float:
        phi = np.asarray(phi, dtype=float)
        beta = self.U.T @ phi
        perp = phi - self.U @ beta
        f = self.filter_factors(lam)
        return float(np.sum(((1.0 - f) * beta) ** 2) + perp @ perp)

    def trace_complement(self, lam: float) -> float:
        """``trace(I - M M#)`` at ``lam``."""
        return float(self.m - np.sum(self.filter_factors(lam)))

    def gcv(self, phi, lam: float) -> float:
        tr = self.trace_complement(lam)
        if not tr > 1e-12 * self.m:
            raise CriterionError(f"GCV denominator vanishes at lambda = {lam:g} (trace {tr:g})")
        return self.residual_sq(phi, lam) / tr**2


def gcv_score(M, phi, L, lam: float) -> float:
    """Generalized cross-validation score ``||M c_lam - phi||^2 / trace(I - M M#)^2``."""
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    return TikhonovFactorization(M, L).gcv(phi, lam)


def select_lambda(M, phi, L, cfg: RegularizationConfig = RegularizationConfig(),
                  factorization: Optional[TikhonovFactorization] = None) -> Tuple[float, float]:
    """Grid minimiser of the GCV score; returns ``(lam, score)``."""
    fac = factorization if factorization is not None else TikhonovFactorization(M, L)
    grid = cfg.grid() * (fac.scale if cfg.relative_grid else 1.0)
    best = (None, np.inf)
    for lam in grid:
        try:
            score = fac.gcv(phi, float(lam))
        except CriterionError:
            continue
        if np.isfinite(score) and score < best[1]:
            best = (float(lam), float(score))
    if best[0] is None:
        raise CriterionError("GCV could not be evaluated at any grid point")
    return best


# --------------------------------------------------------------------------
# stabilizers


def stabilizer_points(layout: Layout, k_L: int) -> np.ndarray:
    lo, hi = layout.breakpoints[0], layout.breakpoints[-1]
    return np.linspace(lo, hi, int(k_L))


def stabilizer_matrix(kind: str, layout: Layout, k_L: int) -> np.ndarray:
    """``L`` for the penalty ``lam ||L c||^2``.

    ``value`` and ``second_derivative`` evaluate the function (or its second
    derivative) at ``k_L`` uniform points and scale rows by
    ``sqrt(width / k_L)``, so ``||L c||^2`` approximates the integral of the
    squared function (or second derivative) over the domain.
    """
    if k_L < 1:
        raise ValueError("k_L must be positive")
    if kind == "identity":
        return np.eye(layout.n_coef)
    if kind not in ("value", "second_derivative"):
        raise ValueError(f"no stabilizer matrix for kind {kind!r}")
    order = 0 if kind == "value" else 2
    width = layout.breakpoints[-1] - layout.breakpoints[0]
    pts = stabilizer_points(layout, k_L)
    return np.sqrt(width / k_L) * evaluation_block(pts, layout, order)


def compressed_stabilizer(kind: str, layout: Layout, k_L: int) -> np.ndarray:
    """Square matrix ``R`` with ``||R c|| = ||L c||``, built piece by piece."""
    if kind == "identity":
        return np.eye(layout.n_coef)
    L = stabilizer_matrix(kind, layout, k_L)
    out = np.zeros((layout.n_coef, layout.n_coef))
    idx = layout.piece_index(stabilizer_points(layout, k_L))
    for i in range(layout.n_pieces):
        cols = layout.columns(i)
        block = L[idx == i][:, cols]
        n = cols.stop - cols.start
        if block.shape[0] == 0:
            continue
        r = scipy.linalg.qr(block, mode="r", check_finite=False)[0][:n]
        sub = np.zeros((n, n))
        sub[: r.shape[0]] = r
        out[cols, cols] = sub
    return out


# --------------------------------------------------------------------------
# positivity


def _ldp(E, f):
    """Least-distance programming ``min ||z||`` subject to ``E z >= f``.

    Solved through the dual non-negative least-squares problem.  Returns
    ``None`` when the constraints are infeasible.
    """
    n = E.shape[1]
    if not np.any(f > 0):
        return np.zeros(n)
    fs = max(np.max(np.abs(f)), 1e-300)
    Ef, ff = E / fs, f / fs
    A = np.vstack([Ef.T, ff[None, :]])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    u, _ = scipy.optimize.nnls(A, b, maxiter=50 * max(A.shape))
    r = A @ u - b
    if abs(r[-1]) < 1e-12:
        return None
    return -r[:n] / r[-1]


def _positive_reduced(Mr, phir, Lr, lam, G, g0, max_rounds=50, rel_tol=1e-6):
    """Least squares subject to ``G c + g0 >= 0``.

    The regularized system ``[Mr; sqrt(lam) Lr]`` is orthogonally reduced to
    ``min ||z - z0||`` and the inequality problem is solved exactly as a
    least-distance program.  A small number of refinement rounds shift the
    bound when roundoff leaves violations above ``rel_tol * max|y|``.

    Returns ``(c, converged, rounds)``.
    """
    rows, rhs = [Mr], [phir]
    if lam > 0 and Lr is not None:
        rows.append(np.sqrt(lam) * Lr)
        rhs.append(np.zeros(Lr.shape[0]))
    A0, b0 = np.vstack(rows), np.concatenate(rhs)
    c = _lstsq(A0, b0)[0]
    y = G @ c + g0
    if y.size == 0 or y.min() >= -rel_tol * np.max(np.abs(y)):
        return c, True, 0
    D = _equilibrate(A0)
    U, sv, Vt = scipy.linalg.svd(A0 * D, full_matrices=False, check_finite=False)
    keep = sv > 1e3 * _EPS * sv[0]
    U, sv, Vt = U[:, keep], sv[keep], Vt[keep]
    # c = D V diag(1/sv) z
    B = (D[:, None] * Vt.T) / sv
    z0 = U.T @ b0
    E = G @ B
    margin = np.zeros(G.shape[0])
    for rounds in range(1, max_rounds + 1):
        w = _ldp(E, -g0 + margin - E @ z0)
        if w is None:
            return c, False, rounds
        c = B @ (z0 + w)
        y = G @ c + g0
        scale = np.max(np.abs(y))
        if y.min() >= -rel_tol * scale:
            return c, True, rounds
        margin = margin + np.maximum(-y, 0.0)
    return c, False, max_rounds


def positive_solve(M, phi, L, lam: float, layout: Layout, grid_size: int) -> np.ndarray:
    """Tikhonov solution constrained to be non-negative on a uniform grid.

    The inequality-constrained problem is solved exactly on the grid.
    Failure to reach ``min y >= -1e-6 max|y|`` issues a ``RuntimeWarning``
    and returns the last iterate.
    """
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    G = evaluation_block(stabilizer_points(layout, grid_size), layout, 0)
    c, ok, _ = _positive_reduced(np.asarray(M, float), np.asarray(phi, float),
                                 None if L is None else np.asarray(L, float), lam, G, np.zeros(G.shape[0]))
    if not ok:
        warnings.warn("positivity constraint not met on the grid", RuntimeWarning, stacklevel=2)
    return c


# --------------------------------------------------------------------------
# search


@dataclass
class _Candidate:
    layout: Layout
    objective: float
    lam: float
    c_free: np.ndarray
    residual_norm: float
    gcv: Optional[float]
    rank_deficient: bool

    @property
    def key(self):
        return (self.layout.n_pieces, tuple(int(d) for d in self.layout.degrees))


def _workers() -> int:
    try:
        n = int(os.environ.get("PPSOLVE_THREADS", "0"))
    except ValueError:
        n = 0
    return n if n > 0 else (os.cpu_count() or 1)


class _Search:
    def __init__(self, eq, data, scfg, rcfg, qcfg, cache):
        self.eq, self.data, self.scfg, self.rcfg, self.qcfg = eq, data, scfg, rcfg, qcfg
        self.cache = cache if cache is not None else MomentCache()
        self.regularized = rcfg.is_active(eq)
        self.k_L = rcfg.stabilizer_points or 10 * data.m
        self.results: Dict[tuple, Optional[_Candidate]] = {}
        phi_norm = float(np.linalg.norm(data.values))
        self.floor = 1e-12 * max(phi_norm, 1e-300)
        self._systems = {}

    def feasible(self, layout: Layout) -> bool:
        return self.data.m >= self.scfg.oversampling * layout.n_coef

    def system(self, layout: Layout):
        hit = self._systems.get(layout)
        if hit is not None:
            return hit
        sys = assemble(self.eq, self.data, layout, self.qcfg, self.cache, n_powers=self.scfg.n_max + 1)
        C, d = constraint_rows(self.eq.constraints, layout, self.eq.affine_shift)
        red = nullspace_reduction(C, d)
        Ar, phir = reduce_system(sys.matrix, sys.rhs, red)
        Lr = None
        if self.regularized:
            Lr = compressed_stabilizer(self.rcfg.stabilizer, layout, self.k_L) @ red.T
        out = (sys, red, Ar, phir, Lr)
        self._systems[layout] = out
        return out

    def evaluate(self, layout: Layout) -> Optional[_Candidate]:
        key = (layout.n_pieces, tuple(int(d) for d in layout.degrees))
        if key in self.results:
            return self.results[key]
        cand = None
        if self.feasible(layout):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                cand = self._solve(layout)
            self._systems.pop(layout, None)
        self.results[key] = cand
        return cand

    def _solve(self, layout):
        sys, red, Ar, phir, Lr = self.system(layout)
        if Ar.shape[1] == 0:
            r = float(np.linalg.norm(phir))
            return _Candidate(layout, r, 0.0, np.zeros(0), r, None, False)
        if not self.regularized:
            c, rank = _lstsq(Ar, phir)
            r = float(np.linalg.norm(Ar @ c - phir))
            return _Candidate(layout, r, 0.0, c, r, None, rank < Ar.shape[1])
        fac = TikhonovFactorization(Ar, Lr)
        if self.rcfg.lam is not None:
            lam = float(self.rcfg.lam)
            try:
                score = fac.gcv(phir, lam)
            except CriterionError:
                score = np.inf
        else:
            try:
                lam, score = select_lambda(Ar, phir, Lr, self.rcfg, fac)
            except CriterionError:
                return None
        c = fac.solve(phir, lam)
        r = float(np.linalg.norm(Ar @ c - phir))
        return _Candidate(layout, float(score), lam, c, r, float(score), not fac.full_rank)

    def evaluate_many(self, layouts):
        todo = [l for l in layouts if (l.n_pieces, tuple(int(d) for d in l.degrees)) not in self.results]
        n = _workers()
        if n > 1 and len(todo) > 1:
            # fill the moment cache first so workers only slice it
            with ThreadPoolExecutor(max_workers=n) as ex:
                list(ex.map(self.evaluate, todo))
        return [self.evaluate(l) for l in layouts]

    # ---- structure enumeration

    def _stagnated(self, history) -> bool:
        w = self.scfg.stagnation_window
        if len(history) <= w:
            return False
        recent = history[-(w + 1):]
        for prev, cur in zip(recent, recent[1:]):
            if not np.isfinite(prev) or prev <= 0:
                return False
            if (prev - cur) / prev >= self.scfg.stagnation_tol:
                return False
        return True

    def _objective(self, cand):
        return np.inf if cand is None else cand.objective

    def equal_degree_sweep(self, bp, grid):
        best = None
        history = []
        for n in grid:
            layout = Layout(bp, [n] * (len(bp) - 1))
            if not self.feasible(layout):
                break
            cand = self.evaluate(layout)
            obj = self._objective(cand)
            if cand is not None and (best is None or obj < best.objective):
                best = cand
            history.append(min(obj, history[-1]) if history else obj)
            if history[-1] <= self.floor_objective or self._stagnated(history):
                break
        return best

    @property
    def floor_objective(self):
        if self.regularized:
            return (self.floor / self.data.m) ** 2
        return self.floor * 1e-3

    def coordinate_descent(self, bp, start, grid):
        k = len(bp) - 1
        degs = list(start)
        current = self.evaluate(Layout(bp, degs))
        for _ in range(self.scfg.max_sweeps):
            changed = False
            for p in range(k):
                trial = []
                for n in grid:
                    d = degs.copy()
                    d[p] = n
                    trial.append(Layout(bp, d))
                cands = self.evaluate_many([l for l in trial if self.feasible(l)])
                for cand in cands:
                    if cand is None:
                        continue
                    if current is None or cand.objective < current.objective * (1 - 1e-12):
                        current = cand
                if current is not None and list(current.layout.degrees) != degs:
                    degs = [int(v) for v in current.layout.degrees]
                    changed = True
            if not changed:
                break
        return current

    def run(self):
        scfg = self.scfg
        if scfg.degrees is not None:
            ks = [len(scfg.degrees)]
        elif scfg.pieces is not None:
            ks = [scfg.pieces]
        else:
            ks = list(range(1, scfg.max_pieces + 1))
        for k in ks:
            bp = uniform_breakpoints(self.eq.domain, k)
            if scfg.degrees is not None:
                layout = Layout(bp, scfg.degrees)
                cand = self._solve_pinned(layout)
                self.results[(k, tuple(scfg.degrees))] = cand
                continue
            grid = scfg.grid_for(k)
            best_equal = self.equal_degree_sweep(bp, grid)
            if k == 1 or best_equal is None:
                continue
            if k <= 2 and len(grid) ** k <= 64:
                layouts = [Layout(bp, [a, b]) for a in grid for b in grid]
                self.evaluate_many([l for l in layouts if self.feasible(l)])
            else:
                self.coordinate_descent(bp, [int(v) for v in best_equal.layout.degrees], grid)
        cands = [c for c in self.results.values() if c is not None]
        if not cands:
            raise SearchError(
                f"no feasible candidate: m = {self.data.m} data points cannot support the smallest model"
            )
        return cands

    def _solve_pinned(self, layout):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return self._solve(layout)


def _choose(cands: List[_Candidate], tie: float, floor: float):
    best = min(c.objective for c in cands)
    limit = best * (1 + tie) + floor
    close = [c for c in cands if c.objective <= limit]
    close.sort(key=lambda c: (c.layout.n_coef, c.objective, c.key))
    return close[0], close[1:]


def search_fit(eq: EquationSpec, data: SampleSet, scfg: SearchConfig = SearchConfig(),
               rcfg: RegularizationConfig = RegularizationConfig(),
               qcfg: QuadratureConfig = QuadratureConfig(),
               cache: Optional[MomentCache] = None) -> FitReport:
    """Fit the equation to the data over piece counts and degrees.

    Candidates use uniform breakpoints.  For each piece count the equal-degree
    sequence is scanned upward until the objective stagnates, then per-piece
    degrees are refined by coordinate descent (full enumeration for two
    pieces on small grids).  The objective is the residual norm, or the GCV
    score with lambda optimised innermost when regularized.  Among candidates
    within ``tie_tolerance`` of the best objective the one with the fewest
    coefficients wins.
    """
    search = _Search(eq, data, scfg, rcfg, qcfg, cache)
    cands = search.run()
    floor = search.floor_objective if search.regularized else search.floor
    chosen, others = _choose(cands, scfg.tie_tolerance, floor)
    report = _finalize(search, chosen, len(search.results))
    report.near_ties = [
        (c.layout.n_pieces, tuple(int(d) for d in c.layout.degrees), c.objective)
        for c in others
        if c.layout.n_pieces != chosen.layout.n_pieces
    ][:5]
    return report


def _finalize(search: _Search, cand: _Candidate, n_evaluated: int) -> FitReport:
    eq, layout = search.eq, cand.layout
    sys, red, Ar, phir, Lr = search.system(layout)
    notes = []
    c_free = cand.c_free
    pos_ok = None
    if eq.constraints.positivity:
        grid_size = search.scfg.positivity_grid or max(5 * search.data.m, 200)
        G = evaluation_block(stabilizer_points(layout, grid_size), layout, 0)
        # positivity applies to y = z - shift
        g0 = G @ red.s - eq.affine_shift
        c_free, pos_ok, rounds = _positive_reduced(Ar, phir, Lr, cand.lam, G @ red.T, g0)
        if not pos_ok:
            notes.append("positivity constraint not met on the grid")
    coef = expand_solution(red, c_free)
    resid = float(np.linalg.norm(Ar @ c_free - phir)) if Ar.shape[1] else float(np.linalg.norm(phir))
    cres = float(np.linalg.norm(red.C @ coef - red.d)) if red.C.shape[0] else 0.0
    if Ar.shape[1]:
        sv = scipy.linalg.svdvals(Ar * _equilibrate(Ar), check_finite=False)
        cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else np.inf
    else:
        cond = 1.0
    if cand.rank_deficient:
        notes.append("reduced system is numerically rank deficient")
    if eq.constraints.continuity_order > effective_continuity_silent(eq, layout):
        notes.append("continuity order clamped to the smallest piece degree")
    sol = PiecewisePolynomial.from_layout(layout, coef)
    if eq.affine_shift:
        sol = sol.with_constant_shift(-eq.affine_shift)
    return FitReport(
        solution=sol,
        pieces=layout.n_pieces,
        degrees=tuple(int(d) for d in layout.degrees),
        lam=float(cand.lam),
        residual_norm=resid,
        gcv_score=cand.gcv,
        constraint_residual=cres,
        condition_estimate=cond,
        regularized=search.regularized,
        rank_deficient=cand.rank_deficient,
        candidates_evaluated=n_evaluated,
        warnings=notes,
        positivity_converged=pos_ok,
    )


def effective_continuity_silent(eq, layout):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return effective_continuity(eq.constraints, layout)


def stabilized_interpolation(points, values, degree: int,
                             rcfg: RegularizationConfig = RegularizationConfig(stabilizer_points=1000)) -> FitReport:
    """Single-polynomial fit with a Tikhonov stabilizer, for ``m`` close to ``degree + 1``.

    ``rcfg.lam = 0`` reproduces classical interpolation (least squares when
    there are more points than coefficients).
    """
    x = np.asarray(points, dtype=float).reshape(-1)
    y = np.asarray(values, dtype=float).reshape(-1)
    order = np.argsort(x)
    x, y = x[order], y[order]
    layout = Layout([x[0], x[-1]], [degree])
    M = evaluation_block(x, layout, 0)
    k_L = rcfg.stabilizer_points or 1000
    kind = rcfg.stabilizer if rcfg.stabilizer != "none" else "value"
    L = compressed_stabilizer(kind, layout, k_L)
    fac = TikhonovFactorization(M, L)
    if rcfg.lam is not None:
        lam = float(rcfg.lam)
        try:
            score = fac.gcv(y, lam)
        except CriterionError:
            score = None
    else:
        lam, score = select_lambda(M, y, L, rcfg, fac)
    if lam == 0:
        c = _lstsq(M, y)[0]
    else:
        c = fac.solve(y, lam)
    sv = scipy.linalg.svdvals(M * _equilibrate(M), check_finite=False)
    return FitReport(
        solution=PiecewisePolynomial.from_layout(layout, c),
        pieces=1,
        degrees=(int(degree),),
        lam=lam,
        residual_norm=float(np.linalg.norm(M @ c - y)),
        gcv_score=score,
        constraint_residual=0.0,
        condition_estimate=float(sv[0] / sv[-1]) if sv[-1] > 0 else np.inf,
        regularized=lam > 0,
        candidates_evaluated=1,
    )
