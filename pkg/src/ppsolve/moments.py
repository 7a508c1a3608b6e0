"""Kernel moments: integrals of a kernel against basis powers.

A moment is ``∫ K(x_i, t) u(t)^j dt`` over one piece of the layout, where
``u`` is the piece's local coordinate (or ``t`` itself when no local map is
given).  Closed forms are used for the exponential (Laplace) kernel and the
Abel kernel ``(x - t)^(-1/2)``; every other kernel goes through a batched
adaptive Gauss-Legendre bisection that integrates all powers ``j`` and all
data points at once.
"""

from __future__ import annotations

import logging
import math
import threading
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import special

from .exceptions import AccuracyError, DataError
from .pp import Interval

logger = logging.getLogger(__name__)

KINDS = ("general", "laplace", "nmr", "abel", "convolution-trig", "user-closed-form")
SINGULARITIES = ("none", "integrable-at-upper-limit", "integrable-at-lower-limit")
TERM_TYPES = ("fredholm", "volterra")

_GL_ORDER = 20
_GL_X, _GL_W = np.polynomial.legendre.leggauss(_GL_ORDER)
_SERIES_MAX_S = 50.0
_TRUNCATION_CAP = 1e6


@dataclass(frozen=True)
class QuadratureConfig:
    abs_tol: float = 1e-12
    rel_tol: float = 1e-10
    max_subdivisions: int = 2000
    truncation_tail_tol: float = 1e-12

    def __post_init__(self):
        for name in ("abs_tol", "rel_tol", "truncation_tail_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_subdivisions < 1:
            raise ValueError("max_subdivisions must be at least 1")


@dataclass(frozen=True, eq=False)
class Kernel:
    """A kernel ``K(x, t)``.

    ``evaluator`` must accept broadcastable numpy arrays.  ``kind`` selects a
    closed-form moment path where one exists; ``source`` is the expression
    text the kernel was compiled from, if any.
    """

    evaluator: Callable
    kind: str = "general"
    singularity: str = "none"
    source: Optional[str] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.singularity not in SINGULARITIES:
            raise ValueError(f"unknown singularity marker {self.singularity!r}")

    def __call__(self, x, t):
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            return np.asarray(self.evaluator(x, t), dtype=float)


def laplace_kernel() -> Kernel:
    return Kernel(lambda x, t: np.exp(-x * t), "laplace", source="exp(-x*t)")


def nmr_kernel() -> Kernel:
    def k(x, t):
        with np.errstate(divide="ignore"):
            return np.where(t > 0, np.exp(-x / np.where(t > 0, t, 1.0)), 0.0)

    return Kernel(k, "nmr", source="exp(-x/t)")


def abel_kernel() -> Kernel:
    return Kernel(
        lambda x, t: 1.0 / np.sqrt(x - t),
        "abel",
        singularity="integrable-at-upper-limit",
        source="1/sqrt(x - t)",
    )


def constant_kernel(value: float = 1.0) -> Kernel:
    return Kernel(lambda x, t: np.full(np.broadcast(x, t).shape, float(value)), source=repr(float(value)))


def _one(x):
    return np.ones_like(np.asarray(x, dtype=float))


@dataclass(frozen=True, eq=False)
class IntegralTerm:
    """``multiplier(x) * ∫ K(x, t) y(t) dt`` over ``[lower, upper]``.

    For a Volterra term the upper limit is ``x`` and ``upper`` is ignored.
    """

    kernel: Kernel
    term_type: str = "fredholm"
    lower: float = 0.0
    upper: float = math.inf
    multiplier: Callable = _one
    multiplier_source: Optional[str] = None

    def __post_init__(self):
        if self.term_type not in TERM_TYPES:
            raise ValueError(f"term_type must be one of {TERM_TYPES}, got {self.term_type!r}")
        lo = float(self.lower)
        if not np.isfinite(lo):
            raise DataError("integral lower limit must be finite")
        if self.term_type == "fredholm" and not float(self.upper) > lo:
            raise DataError("fredholm limits need lower < upper")


@dataclass(frozen=True)
class LocalMap:
    """Affine map ``u = (t - center) / half_width``."""

    center: float
    half_width: float

    @classmethod
    def for_piece(cls, piece: Interval) -> "LocalMap":
        return cls(0.5 * (piece.lo + piece.hi), 0.5 * (piece.hi - piece.lo))

    def __call__(self, t):
        return (np.asarray(t, dtype=float) - self.center) / self.half_width


def _powers(u, n_powers):
    u = np.asarray(u, dtype=float)
    out = np.empty(u.shape + (n_powers,))
    out[..., 0] = 1.0
    for j in range(1, n_powers):
        out[..., j] = out[..., j - 1] * u
    return out


# --------------------------------------------------------------------------
# batched adaptive quadrature


def _gauss_segments(f, task, a, b):
    half = 0.5 * (b - a)
    t = 0.5 * (a + b)[:, None] + half[:, None] * _GL_X[None, :]
    vals = f(task, t)
    return half[:, None] * np.einsum("snj,n->sj", vals, _GL_W), half[:, None] * np.einsum(
        "snj,n->sj", np.abs(vals), _GL_W
    )


def batch_quad(f, lo, hi, n_out, cfg: QuadratureConfig):
    """Integrate a vector-valued integrand over one interval per task.

    ``f(task, t)`` receives task indices of shape ``(S,)`` and nodes of shape
    ``(S, n)`` and returns values of shape ``(S, n, n_out)``.  Each segment
    is compared against the sum of its two halves; segments whose
    disagreement exceeds their share of the tolerance are bisected.

    Returns the integrals, shape ``(n_tasks, n_out)``.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    n_tasks = lo.size
    result = np.zeros((n_tasks, n_out))
    if n_tasks == 0:
        return result
    task = np.arange(n_tasks)
    width = hi - lo
    coarse, coarse_abs = _gauss_segments(f, task, lo, hi)
    scale = coarse_abs.max(axis=1)
    budget = np.maximum(cfg.abs_tol, cfg.rel_tol * scale)
    segments_used = np.ones(n_tasks, dtype=int)
    a, b, whole = lo, hi, coarse
    while task.size:
        mid = 0.5 * (a + b)
        left, _ = _gauss_segments(f, task, a, mid)
        right, _ = _gauss_segments(f, task, mid, b)
        halves = left + right
        err = np.abs(halves - whole).max(axis=1)
        share = budget[task] * (b - a) / width[task]
        ok = (err <= share) | (b - a <= 1e-14 * np.maximum(1.0, np.abs(a)))
        np.add.at(result, task[ok], halves[ok])
        bad = ~ok
        if not np.any(bad):
            break
        task, a, b, mid = task[bad], a[bad], b[bad], mid[bad]
        np.add.at(segments_used, task, 1)
        if np.any(segments_used[task] > cfg.max_subdivisions):
            worst = err[bad].max()
            raise AccuracyError(
                f"adaptive quadrature did not converge within {cfg.max_subdivisions} subdivisions",
                error_estimate=float(worst),
            )
        task = np.concatenate([task, task])
        a, b = np.concatenate([a, mid]), np.concatenate([mid, b])
        whole = np.concatenate([left[bad], right[bad]])
    return result


def _integrand(kernel, xs, local_map, n_powers):
    def f(task, t):
        k = kernel(xs[task][:, None], t)
        u = t if local_map is None else local_map(t)
        return k[..., None] * _powers(u, n_powers)

    return f


def _singular_integrand(kernel, xs, local_map, n_powers, z, side):
    # sqrt substitution about the singular point z: t = z - s^2 (side="upper")
    # or t = z + s^2 (side="lower"); dt = 2 s ds removes |t - z|^(-1/2).
    sign = -1.0 if side == "upper" else 1.0

    def f(task, s):
        t = z[task][:, None] + sign * s * s
        k = kernel(xs[task][:, None], t)
        u = t if local_map is None else local_map(t)
        return (2.0 * s * k)[..., None] * _powers(u, n_powers)

    return f


def _quad_table(kernel, xs, lo, hi, local_map, n_powers, cfg, singular_at=None, side="upper"):
    """Moments for tasks ``xs`` over per-task limits ``[lo, hi]`` (finite)."""
    if singular_at is None:
        return batch_quad(_integrand(kernel, xs, local_map, n_powers), lo, hi, n_powers, cfg)
    z = np.asarray(singular_at, dtype=float)
    if side == "upper":
        s_lo, s_hi = np.sqrt(np.maximum(z - hi, 0.0)), np.sqrt(np.maximum(z - lo, 0.0))
    else:
        s_lo, s_hi = np.sqrt(np.maximum(lo - z, 0.0)), np.sqrt(np.maximum(hi - z, 0.0))
    f = _singular_integrand(kernel, xs, local_map, n_powers, z, side)
    return batch_quad(f, s_lo, s_hi, n_powers, cfg)


# --------------------------------------------------------------------------
# closed forms


def laplace_local_table(xs, piece: Interval, n_powers: int) -> np.ndarray:
    """``∫_p^q exp(-x t) u(t)^j dt`` in the piece's local coordinate.

    With ``s = x h / 2`` the integral is ``(h/2) e^{-x c} ∫_{-1}^{1} e^{-s u} u^j du``.
    For ``|s|`` up to a moderate size the inner integral is summed from its
    power series, whose surviving terms all share one sign; beyond that the
    integration-by-parts recurrence runs upward, where it is stable because
    ``j < |s|``.
    """
    xs = np.asarray(xs, dtype=float).reshape(-1)
    p, q = piece.lo, piece.hi
    c, h2 = 0.5 * (p + q), 0.5 * (q - p)
    s = xs * h2
    out = np.empty((xs.size, n_powers))
    j = np.arange(n_powers)

    small = np.abs(s) <= max(_SERIES_MAX_S, 1.5 * n_powers)
    if np.any(small):
        ss = s[small]
        k_max = int(np.ceil(np.abs(ss).max() * 1.5)) + 60 + n_powers
        k = np.arange(k_max)
        # log(|s|^k / k!) with |s|^0 = 1 for s = 0
        with np.errstate(divide="ignore", invalid="ignore"):
            log_abs = np.where(k[None, :] == 0, 0.0, k[None, :] * np.log(np.abs(ss))[:, None])
        log_terms = log_abs - special.gammaln(k + 1)[None, :]
        sign_k = np.where(ss[:, None] >= 0, (-1.0) ** k[None, :], 1.0)
        terms = sign_k * np.exp(log_terms)  # (-s)^k / k!
        parity = (1 + (-1.0) ** (j[:, None] + k[None, :])) / (j[:, None] + k[None, :] + 1)
        inner = terms @ parity.T
        out[small] = h2 * np.exp(-xs[small] * c)[:, None] * inner
    big = ~small
    if np.any(big):
        xb, sb = xs[big], s[big]
        ep, eq = np.exp(-xb * p), np.exp(-xb * q)
        g = np.empty((xb.size, n_powers))
        g[:, 0] = (ep - eq) / sb
        for jj in range(1, n_powers):
            g[:, jj] = ((-1.0) ** jj * ep - eq) / sb + (jj / sb) * g[:, jj - 1]
        out[big] = h2 * g
    return out


def laplace_global_table(xs, lo: float, hi: float, n_powers: int) -> np.ndarray:
    """``∫_lo^hi exp(-x t) t^j dt`` for ``x > 0`` via incomplete gamma functions."""
    xs = np.asarray(xs, dtype=float).reshape(-1)
    if np.any(xs <= 0):
        raise DataError("global-power Laplace moments need x > 0")
    j = np.arange(n_powers)[None, :]
    a = j + 1.0
    x = xs[:, None]
    upper = special.gammaincc(a, x * lo) - (special.gammaincc(a, x * hi) if np.isfinite(hi) else 0.0)
    return np.exp(special.gammaln(a) - a * np.log(x)) * upper


def _abel_nodes(n_powers):
    n_leg = n_powers + 1
    n_jac = n_powers // 2 + 2
    xl, wl = np.polynomial.legendre.leggauss(n_leg)
    xj, wj = special.roots_jacobi(n_jac, -0.5, 0.0)
    return xl, wl, xj, wj


def abel_table(xs, piece: Interval, n_powers: int, local_map: Optional[LocalMap]) -> np.ndarray:
    """``∫ (x - t)^(-1/2) u(t)^j dt`` over ``piece ∩ (-inf, x]``.

    The piece containing ``x`` uses Gauss-Jacobi quadrature with weight
    ``(1 - v)^(-1/2)``; pieces strictly below ``x`` use the substitution
    ``t = x - s^2``, which turns the integrand into a polynomial in ``s``.
    Both rules are exact for polynomial ``u``-powers at these node counts.
    """
    xs = np.asarray(xs, dtype=float).reshape(-1)
    p, q = piece.lo, piece.hi
    out = np.zeros((xs.size, n_powers))
    xl, wl, xj, wj = _abel_nodes(n_powers)

    def basis(t):
        return _powers(t if local_map is None else local_map(t), n_powers)

    below = xs > q
    if np.any(below):
        xb = xs[below]
        s_lo, s_hi = np.sqrt(xb - q), np.sqrt(xb - p)
        half = 0.5 * (s_hi - s_lo)
        s = 0.5 * (s_hi + s_lo)[:, None] + half[:, None] * xl[None, :]
        t = xb[:, None] - s * s
        out[below] = 2.0 * half[:, None] * np.einsum("snj,n->sj", basis(t), wl)
    inside = (xs > p) & (xs <= q)
    if np.any(inside):
        xi = xs[inside]
        ln = xi - p
        t = p + ln[:, None] * (1.0 + xj[None, :]) / 2.0
        out[inside] = np.sqrt(ln / 2.0)[:, None] * np.einsum("snj,n->sj", basis(t), wj)
        if local_map is None and p == 0.0:
            # exact Beta-function value x^(j+1/2) B(j+1, 1/2)
            jj = np.arange(n_powers)[None, :]
            out[inside] = np.exp(
                (jj + 0.5) * np.log(xi)[:, None] + special.betaln(jj + 1.0, 0.5)
            )
    return out


def abel_closed_moment(x: float, piece: Interval, j: int, local_map: Optional[LocalMap] = None) -> float:
    """``∫ (x - t)^(-1/2) u(t)^j dt`` over the part of ``piece`` below ``x``."""
    if j < 0:
        raise ValueError("power must be non-negative")
    return float(abel_table([x], piece, j + 1, local_map)[0, j])


# --------------------------------------------------------------------------
# public single-moment API


def infinite_tail_truncation(kernel: Kernel, x_min: float, cfg: QuadratureConfig = QuadratureConfig(),
                             poly_degree: int = 2) -> float:
    """Truncation point ``T`` for an infinite upper limit.

    ``T`` is the smallest ``t`` beyond which the envelope
    ``|K(x_min, t)| * max(1, |x_min| t)^poly_degree`` stays below the tail
    tolerance.  Raises ``AccuracyError`` if no such ``T`` exists below 1e6.
    """
    tol = cfg.truncation_tail_tol
    scale = max(abs(x_min), 1e-300)

    def envelope(t):
        t = np.asarray(t, dtype=float)
        return np.abs(kernel(x_min, t)) * np.maximum(1.0, scale * t) ** poly_degree

    grid = np.geomspace(1e-6, _TRUNCATION_CAP, 600)
    env = envelope(grid)
    below = np.isfinite(env) & (env <= tol)
    # last grid point that violates the bound
    viol = np.flatnonzero(~below)
    if viol.size == 0:
        return float(grid[0])
    if viol[-1] == grid.size - 1:
        raise AccuracyError(
            f"kernel does not decay below {tol:g} before t = {_TRUNCATION_CAP:g}",
            error_estimate=float(env[-1]) if np.isfinite(env[-1]) else None,
        )
    a, b = grid[viol[-1]], grid[viol[-1] + 1]
    for _ in range(200):
        mid = 0.5 * (a + b)
        if envelope(mid) <= tol:
            b = mid
        else:
            a = mid
        if b - a <= 1e-15 * b:
            break
    return float(b)


def _clip_limits(piece: Interval, lower: float, upper: float):
    lo, hi = max(piece.lo, lower), min(piece.hi, upper)
    return lo, hi


def _table(kernel, xs, piece, local_map, n_powers, cfg, lower, upper_per_row):
    """Moments over ``piece ∩ [lower, upper_i]`` for each row; zero when empty."""
    xs = np.asarray(xs, dtype=float).reshape(-1)
    upper = np.broadcast_to(np.asarray(upper_per_row, dtype=float), xs.shape)
    lo = max(piece.lo, lower)
    hi = np.minimum(piece.hi, upper)
    out = np.zeros((xs.size, n_powers))
    live = hi > lo
    if not np.any(live):
        return out
    rows = np.flatnonzero(live)
    if kernel.kind == "abel":
        # rows integrate over [lo, min(q, x_i)], which abel_table clips itself
        out[rows] = abel_table(xs[rows], Interval(lo, piece.hi), n_powers, local_map)
        return out
    if kernel.kind == "laplace":
        if local_map is not None and lo == piece.lo and np.all(hi[rows] == piece.hi):
            out[rows] = laplace_local_table(xs[rows], piece, n_powers)
            return out
        if local_map is None and np.all(xs[rows] > 0):
            for r in rows:
                out[r] = laplace_global_table([xs[r]], lo, hi[r], n_powers)[0]
            return out
    hi_r = hi[rows].copy()
    if not np.all(np.isfinite(hi_r)):
        x_min = float(np.min(np.abs(xs[rows])))
        hi_r = np.minimum(hi_r, infinite_tail_truncation(kernel, x_min, cfg))
    lo_r = np.full(rows.size, lo)
    if kernel.singularity == "integrable-at-upper-limit":
        out[rows] = _quad_table(kernel, xs[rows], lo_r, hi_r, local_map, n_powers, cfg,
                                singular_at=np.maximum(upper[rows], hi_r), side="upper")
    elif kernel.singularity == "integrable-at-lower-limit":
        out[rows] = _quad_table(kernel, xs[rows], lo_r, hi_r, local_map, n_powers, cfg,
                                singular_at=np.full(rows.size, lower), side="lower")
    else:
        out[rows] = _quad_table(kernel, xs[rows], lo_r, hi_r, local_map, n_powers, cfg)
    return out


def fredholm_table(kernel, xs, piece, local_map, n_powers, cfg=QuadratureConfig(),
                   lower=-math.inf, upper=math.inf):
    """Fredholm moments for all rows ``xs`` and powers ``0..n_powers-1``."""
    if kernel.kind == "abel":
        raise DataError("the Abel kernel is only meaningful in a Volterra term")
    return _table(kernel, xs, piece, local_map, n_powers, cfg, lower, upper)


def volterra_table(kernel, xs, piece, local_map, n_powers, cfg=QuadratureConfig(), lower=-math.inf):
    """Volterra moments: row ``i`` integrates over ``piece ∩ [lower, x_i]``."""
    xs = np.asarray(xs, dtype=float).reshape(-1)
    return _table(kernel, xs, piece, local_map, n_powers, cfg, lower, xs)


def fredholm_moment(kernel: Kernel, x_i: float, piece: Interval, local_map: Optional[LocalMap], j: int,
                    cfg: QuadratureConfig = QuadratureConfig()) -> float:
    """``∫_piece K(x_i, t) u(t)^j dt``; ``local_map=None`` means global powers ``t^j``."""
    if j < 0:
        raise ValueError("power must be non-negative")
    return float(fredholm_table(kernel, [x_i], piece, local_map, j + 1, cfg)[0, j])


def volterra_moment(kernel: Kernel, x_i: float, piece: Interval, local_map: Optional[LocalMap], j: int,
                    cfg: QuadratureConfig = QuadratureConfig(), lower: float = -math.inf) -> float:
    """``∫ K(x_i, t) u(t)^j dt`` over ``piece ∩ [lower, x_i]``."""
    if j < 0:
        raise ValueError("power must be non-negative")
    return float(volterra_table(kernel, [x_i], piece, local_map, j + 1, cfg, lower)[0, j])


class MomentCache:
    """Memo of moment tables keyed by term, abscissae, and piece.

    Tables are stored with as many powers as were ever requested and sliced
    on lookup.  Safe to share between threads.
    """

    def __init__(self):
        self._store = {}
        self._lock = threading.Lock()

    def table(self, term: IntegralTerm, xs: np.ndarray, piece: Interval, n_powers: int,
              cfg: QuadratureConfig) -> np.ndarray:
        key = (id(term), xs.tobytes(), piece.lo, piece.hi, cfg)
        with self._lock:
            hit = self._store.get(key)
        if hit is not None and hit[1].shape[1] >= n_powers:
            return hit[1][:, :n_powers]
        local = LocalMap.for_piece(piece)
        if term.term_type == "fredholm":
            tab = fredholm_table(term.kernel, xs, piece, local, n_powers, cfg, term.lower, term.upper)
        else:
            tab = volterra_table(term.kernel, xs, piece, local, n_powers, cfg, term.lower)
        tab.setflags(write=False)
        with self._lock:
            # hold a reference to the term so its id stays unique
            self._store[key] = (term, tab)
        return tab

    def __len__(self):
        return len(self._store)
