"""RBF kernels, Gram matrices and the median-rule bandwidth.

Residual vectors are 1-D arrays; inputs to ``gram`` may also be (N, d)
arrays of points. Every function here is pure.
"""

from __future__ import annotations

import math

import numpy as np

DEFAULT_SIGMA_FLOOR = 1e-6


class DegenerateBandwidthError(ValueError):
    """Raised when a bandwidth is zero, negative or not finite."""


def check_sigma(sigma: float) -> float:
    sigma = float(sigma)
    if not math.isfinite(sigma) or sigma <= 0.0:
        raise DegenerateBandwidthError(f"bandwidth must be positive and finite, got {sigma!r}")
    return sigma


def _as_points(points) -> np.ndarray:
    P = np.asarray(points, dtype=float)
    if P.ndim == 1:
        P = P[:, None]
    elif P.ndim != 2:
        raise ValueError(f"points must be 1-D or 2-D, got shape {P.shape}")
    return P


def rbf(x, y, sigma: float) -> float:
    """Gaussian kernel ``exp(-||x - y||^2 / (2 sigma^2))`` between two vectors."""
    sigma = check_sigma(sigma)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    d2 = float(np.sum((x - y) ** 2))
    return math.exp(-d2 / (2.0 * sigma * sigma))


def pairwise_sq_dists(points) -> np.ndarray:
    """Symmetric matrix of squared Euclidean distances with an exact zero diagonal."""
    P = _as_points(points)
    if P.shape[1] == 1:
        diff = P[:, 0][:, None] - P[:, 0][None, :]
        # (a-b)^2 == (b-a)^2 bitwise, so this is exactly symmetric
        return diff * diff
    sq = np.einsum("ij,ij->i", P, P)
    D = sq[:, None] + sq[None, :] - 2.0 * (P @ P.T)
    D = 0.5 * (D + D.T)
    np.maximum(D, 0.0, out=D)
    np.fill_diagonal(D, 0.0)
    return D


def gram(points, sigma: float) -> np.ndarray:
    """RBF Gram matrix ``K_ij = rbf(p_i, p_j, sigma)`` for N >= 2 points."""
    sigma = check_sigma(sigma)
    P = _as_points(points)
    if P.shape[0] < 2:
        raise ValueError("a Gram matrix needs at least 2 points")
    return np.exp(-pairwise_sq_dists(P) / (2.0 * sigma * sigma))


def normalize(K: np.ndarray) -> np.ndarray:
    """Trace-one normalisation ``A_ij = K_ij / (N sqrt(K_ii K_jj))``."""
    K = np.asarray(K, dtype=float)
    n = K.shape[0]
    d = np.sqrt(np.diag(K))
    return K / np.outer(d, d) / n


def center(K: np.ndarray) -> np.ndarray:
    """Double centering ``H K H`` with ``H = I - 11^T / N``."""
    K = np.asarray(K, dtype=float)
    Kc = K - K.mean(axis=0, keepdims=True)
    Kc = Kc - Kc.mean(axis=1, keepdims=True)
    return Kc


def _median_of_pairs(d2: np.ndarray) -> float:
    n = d2.shape[0]
    iu = np.triu_indices(n, k=1)
    # np.median averages the two middle values for even counts
    return float(np.median(d2[iu]))


def median_rule(
    residuals,
    *,
    squared: bool = True,
    floor: float | None = None,
) -> float:
    """Median-rule kernel size from the pairwise spread of ``residuals``.

    With ``squared=True`` (the default) the bandwidth is the median of
    ``(e_i - e_j)^2`` over pairs ``i < j``, taken as-is; ``squared=False``
    uses the median distance ``|e_i - e_j|`` instead. Diagonal pairs are
    excluded.

    If most residuals coincide the median is 0. That raises
    :class:`DegenerateBandwidthError` unless ``floor`` is given, in which
    case ``floor`` is returned.
    """
    e = np.asarray(residuals, dtype=float)
    if e.ndim != 1:
        e = e.reshape(len(e), -1)
    if len(e) < 2:
        raise ValueError("median rule needs at least 2 residuals")
    if not np.all(np.isfinite(e)):
        raise ValueError("residuals must be finite")
    d2 = pairwise_sq_dists(e)
    sigma = _median_of_pairs(d2 if squared else np.sqrt(d2))
    if sigma <= 0.0 or not math.isfinite(sigma):
        if floor is not None:
            return check_sigma(floor)
        raise DegenerateBandwidthError(
            "median pairwise residual spread is zero (most residuals coincide)"
        )
    return sigma
