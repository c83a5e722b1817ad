"""Input checks shared by the public estimator."""
from __future__ import annotations

from typing import Sequence, Tuple

import numpy as np
from sklearn.utils import check_array


def check_snapshots(X, n_points: int) -> np.ndarray:
    """Return ``X`` as a finite float array of shape ``(n_times, n_points)``."""
    X = check_array(X, dtype=np.float64, ensure_2d=True, ensure_all_finite=True,
                    ensure_min_samples=1)
    if X.shape[1] != n_points:
        raise ValueError(
            f"each snapshot must have {n_points} grid values, got {X.shape[1]}"
        )
    return X


def check_unknown(unknown: Sequence[int]) -> Tuple[int, ...]:
    terms = tuple(sorted(int(k) for k in unknown))
    if not terms:
        raise ValueError("at least one unknown coefficient is required")
    if any(k not in range(1, 6) for k in terms) or len(set(terms)) != len(terms):
        raise ValueError(f"unknown must be distinct indices in 1..5, got {tuple(unknown)}")
    return terms


def check_guess(guess, n: int) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(guess, dtype=float))
    if arr.size == 1:
        arr = np.full(n, float(arr[0]))
    if arr.shape != (n,):
        raise ValueError(f"initial_guess needs 1 or {n} values, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("initial_guess must be finite")
    return arr
