"""Input checks shared by the estimator classes."""

from __future__ import annotations

from typing import Optional, Tuple

import numpy as np
from sklearn.utils.validation import check_array, check_consistent_length

from .exceptions import DataError


def as_points(X, name: str = "X") -> np.ndarray:
    """Coerce ``X`` to a 1-D float array of abscissae.

    Accepts a 1-D array or a single-column 2-D array (the usual
    ``(n_samples, 1)`` shape).  Non-finite values are rejected.
    """
    arr = np.asarray(X)
    if arr.ndim == 2 and arr.shape[1] != 1:
        raise DataError(f"{name} must have exactly one feature, got {arr.shape[1]}")
    arr = check_array(arr.reshape(-1, 1) if arr.ndim <= 1 else arr, dtype=float,
                      ensure_all_finite=True, input_name=name)
    return arr[:, 0]


def as_samples(X, y, min_samples: int = 1) -> Tuple[np.ndarray, np.ndarray]:
    """Validated, sorted ``(x, y)`` pairs with distinct abscissae."""
    x = as_points(X)
    v = check_array(np.asarray(y, dtype=float).reshape(-1, 1), dtype=float,
                    ensure_all_finite=True, input_name="y")[:, 0]
    check_consistent_length(x, v)
    if x.size < min_samples:
        raise DataError(f"need at least {min_samples} samples, got {x.size}")
    order = np.argsort(x, kind="stable")
    x, v = x[order], v[order]
    dup = np.flatnonzero(np.diff(x) == 0)
    if dup.size:
        raise DataError(f"duplicate abscissa x = {float(x[dup[0]])!r}")
    return x, v


def as_domain(domain, x: Optional[np.ndarray] = None) -> Tuple[float, float]:
    """``domain`` as a float pair, defaulting to the data range."""
    if domain is None:
        if x is None:
            raise DataError("a domain is required")
        return float(x[0]), float(x[-1])
    lo, hi = (float(v) for v in domain)
    if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
        raise DataError(f"domain must be a finite interval with lo < hi, got {domain!r}")
    return lo, hi
