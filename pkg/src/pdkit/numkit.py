"""Dense linear-algebra kernels used by the solvers.

Vectors and matrices are plain ``numpy`` float64 arrays.  The helpers
:func:`as_vector` and :func:`as_matrix` validate shape and finiteness at the
boundary so the numerical code below can assume clean data.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, NonFiniteData, NotPositiveDefinite, NotSymmetric

EPS = np.finfo(np.float64).eps


def as_vector(v, name: str = "vector") -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise DimensionMismatch(f"{name} must be one-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteData(f"{name} contains NaN or Inf")
    return arr


def as_matrix(M, name: str = "matrix") -> np.ndarray:
    arr = np.asarray(M, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be two-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteData(f"{name} contains NaN or Inf")
    return arr


@dataclass(frozen=True)
class SpdFactor:
    """Lower Cholesky factor ``L`` with ``L @ L.T == M``."""

    lower: np.ndarray

    @property
    def order(self) -> int:
        return self.lower.shape[0]

    def reconstruct(self) -> np.ndarray:
        return self.lower @ self.lower.T


def spd_factor(M) -> SpdFactor:
    """Cholesky-factor a symmetric positive definite matrix.

    Raises
    ------
    NotSymmetric
        If ``M`` deviates from its transpose by more than ``1e-12`` relative.
    NotPositiveDefinite
        If the factorization fails or a squared pivot falls below
        ``n * eps * max(diag(M))``.
    """
    M = as_matrix(M, "M")
    n, k = M.shape
    if n != k:
        raise DimensionMismatch(f"M must be square, got {M.shape}")
    scale = max(np.abs(M).max(initial=0.0), 1.0)
    if np.abs(M - M.T).max(initial=0.0) > 1e-12 * scale:
        raise NotSymmetric("M is not symmetric")
    try:
        lower = np.linalg.cholesky(M)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None
    pivots = np.diag(lower) ** 2
    if n and pivots.min() <= n * EPS * np.diag(M).max():
        raise NotPositiveDefinite("matrix is numerically singular")
    return SpdFactor(lower)


def spd_solve(f: SpdFactor, rhs) -> np.ndarray:
    rhs = np.asarray(rhs, dtype=np.float64)
    if rhs.shape[0] != f.order:
        raise DimensionMismatch(f"rhs has length {rhs.shape[0]}, factor order is {f.order}")
    return scipy.linalg.cho_solve((f.lower, True), rhs, check_finite=False)


def lstsq_min_norm(A, b) -> np.ndarray:
    """Minimum 2-norm minimizer of ``||A x - b||``."""
    A = as_matrix(A, "A")
    b = as_vector(b, "b")
    if A.size == 0:
        raise DimensionMismatch("A must be nonempty")
    if A.shape[0] != b.shape[0]:
        raise DimensionMismatch(f"A has {A.shape[0]} rows but b has length {b.shape[0]}")
    return np.linalg.lstsq(A, b, rcond=None)[0]


def _rank_cutoff(s: np.ndarray, n: int) -> float:
    return n * EPS * (s[0] if s.size else 0.0)


def null_space_basis(A) -> np.ndarray:
    """Orthonormal basis of ``ker A`` from the SVD, as columns of an ``n x k`` array."""
    A = as_matrix(A, "A")
    n = A.shape[1]
    _, s, vt = np.linalg.svd(A, full_matrices=True)
    rank = int(np.sum(s > _rank_cutoff(s, n)))
    return vt[rank:].T.copy()


def pinv(M) -> np.ndarray:
    """Moore-Penrose pseudoinverse with singular values below ``n * eps * smax`` dropped."""
    M = as_matrix(M, "M")
    u, s, vt = np.linalg.svd(M, full_matrices=False)
    keep = s > _rank_cutoff(s, max(M.shape))
    inv = np.zeros_like(s)
    inv[keep] = 1.0 / s[keep]
    return (vt.T * inv) @ u.T


def op_norm_estimate(K, iters: int = 50, seed: int = 0) -> float:
    """Estimate the spectral norm ``||K||_2`` by power iteration on ``K^T K``."""
    K = as_matrix(K, "K")
    if K.size == 0:
        return 0.0
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(K.shape[1])
    x /= np.linalg.norm(x)
    est = 0.0
    for _ in range(iters):
        y = K.T @ (K @ x)
        nrm = np.linalg.norm(y)
        if nrm == 0.0:
            return 0.0
        x = y / nrm
        est = np.sqrt(nrm)
    return float(est)
