"""Input validation helpers shared across the package."""
from __future__ import annotations

import numpy as np

PROB_SUM_TOL = 1e-6


class ProbabilityError(ValueError):
    pass


def check_probability_vector(probs, n_labels: int) -> np.ndarray:
    """Validate one per-label probability vector; returns a float array."""
    v = np.asarray(probs, dtype=float)
    if v.shape != (n_labels,):
        raise ProbabilityError(
            f"probability vector has shape {v.shape}, expected ({n_labels},)"
        )
    if not np.all(np.isfinite(v)):
        raise ProbabilityError(f"non-finite probability entries: {v}")
    # tiny grace beyond the documented tolerance so a sum sitting exactly on
    # the boundary is not rejected for rounding
    if abs(float(v.sum()) - 1.0) > PROB_SUM_TOL + 1e-12:
        raise ProbabilityError(
            f"probabilities sum to {v.sum()!r}, expected 1 within {PROB_SUM_TOL}"
        )
    return v


def check_probability_matrix(probs, n_labels: int, n_rows: int | None = None) -> np.ndarray:
    """Validate a stack of probability vectors (one row per pair)."""
    m = np.asarray(probs, dtype=float)
    if m.ndim != 2 or m.shape[1] != n_labels:
        raise ProbabilityError(
            f"probability matrix has shape {m.shape}, expected (*, {n_labels})"
        )
    if n_rows is not None and m.shape[0] != n_rows:
        raise ProbabilityError(
            f"probability matrix has {m.shape[0]} rows, expected {n_rows}"
        )
    for row in m:
        check_probability_vector(row, n_labels)
    return m
