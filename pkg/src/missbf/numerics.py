"""Small numerical helpers shared across modules."""

from __future__ import annotations

import numpy as np

from .exceptions import DomainError


def cholesky(a: np.ndarray, what: str = "matrix") -> np.ndarray:
    """Lower Cholesky factor; raises DomainError instead of LinAlgError."""
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        raise DomainError(f"{what} is not symmetric positive definite") from None


def chol_logdet(L: np.ndarray) -> np.ndarray:
    """log|A| from the Cholesky factor of A (works on stacks)."""
    return 2.0 * np.log(np.diagonal(L, axis1=-2, axis2=-1)).sum(axis=-1)


def log_mean_exp(r, axis: int = -1):
    """Max-shifted log of the mean of exp(r), plus its delta-method std error.

    The standard error treats the terms as independent draws:
    se(log mean) ~= sd(w) / (sqrt(J) * mean(w)) with w = exp(r - max r).
    """
    r = np.asarray(r, dtype=np.float64)
    J = r.shape[axis]
    m = np.max(r, axis=axis, keepdims=True)
    w = np.exp(r - m)
    mean_w = w.mean(axis=axis)
    value = np.squeeze(m, axis=axis) + np.log(mean_w)
    if J > 1:
        se = w.std(axis=axis, ddof=1) / (np.sqrt(J) * mean_w)
    else:
        se = np.zeros_like(mean_w)
    return value, se


def logsumexp(a) -> float:
    a = np.asarray(a, dtype=np.float64)
    m = a.max()
    return float(m + np.log(np.exp(a - m).sum()))


def centered(a: np.ndarray, axis: int = -2) -> np.ndarray:
    return a - a.mean(axis=axis, keepdims=True)
