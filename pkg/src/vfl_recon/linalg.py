"""Dense linear-algebra kernels used by training, the attacks and the defenses.

Every function takes and returns float64 numpy arrays.  A "matrix" here is a
2-D, non-empty, finite array; :func:`as_matrix` enforces that on entry.
"""
from __future__ import annotations

from typing import Literal

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, RankDeficient

DEFAULT_RTOL = 1e-8


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Return ``a`` as a finite 2-D float64 array with at least one entry."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionMismatch(f"{name} must be a non-empty 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf")
    return arr


def _check_rtol(rtol: float) -> float:
    if not 0.0 < rtol < 1.0:
        raise ValueError(f"relative rank threshold must lie in (0, 1), got {rtol}")
    return float(rtol)


def numerical_rank(a, rtol: float = DEFAULT_RTOL) -> int:
    """Count singular values above ``rtol * sigma_max``; 0 for the zero matrix."""
    a = as_matrix(a)
    rtol = _check_rtol(rtol)
    s = np.linalg.svd(a, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > rtol * s[0]))


def select_independent(
    a,
    axis: Literal["rows", "cols"],
    target: int,
    rtol: float = DEFAULT_RTOL,
) -> list[int]:
    """Pick ``target`` linearly independent rows or columns of ``a``.

    Uses column-pivoted QR, so the choice is a deterministic function of the
    matrix.  The returned indices are in pivot order.
    """
    a = as_matrix(a)
    if axis not in ("rows", "cols"):
        raise ValueError(f"axis must be 'rows' or 'cols', got {axis!r}")
    m = a if axis == "cols" else a.T
    if target < 1 or target > m.shape[1]:
        raise RankDeficient(f"cannot select {target} of {m.shape[1]} {axis}")
    rank = numerical_rank(m, rtol)
    if rank < target:
        raise RankDeficient(f"matrix has numerical rank {rank} < requested {target}")
    _, _, piv = scipy.linalg.qr(m, mode="economic", pivoting=True)
    chosen = [int(i) for i in piv[:target]]
    if numerical_rank(m[:, chosen], rtol) != target:
        raise RankDeficient("pivoted QR failed to isolate an independent subset")
    return chosen


class PinvSolver:
    """Least-squares solver with a precomputed pseudo-inverse.

    After the one-off ``O(rows * cols^2)`` setup each :meth:`solve` costs
    ``O(rows * cols)``.  Rank-deficient inputs yield the minimum-norm solution.
    """

    def __init__(self, a):
        self.a = as_matrix(a)
        self.pinv = np.linalg.pinv(self.a)

    def solve(self, b) -> tuple[np.ndarray, float]:
        b = np.asarray(b, dtype=np.float64)
        if b.shape[0] != self.a.shape[0]:
            raise DimensionMismatch(f"rhs has {b.shape[0]} rows, matrix has {self.a.shape[0]}")
        w = self.pinv @ b
        r = self.a @ w - b
        return w, float(r @ r) if r.ndim == 1 else (r * r).sum(axis=0)


def least_squares(a, b) -> tuple[np.ndarray, float]:
    """Return ``(w, ||a w - b||^2)`` for the minimiser of ``||a w - b||``."""
    a = as_matrix(a)
    if a.shape[0] < a.shape[1]:
        raise DimensionMismatch("least_squares expects rows >= cols")
    return PinvSolver(a).solve(b)


def leverage_scores(a, rtol: float = DEFAULT_RTOL) -> np.ndarray:
    """Normalised leverage scores ``||U_(i)||^2 / d`` of a full-column-rank matrix."""
    a = as_matrix(a)
    d = a.shape[1]
    if numerical_rank(a, rtol) != d:
        raise RankDeficient("leverage scores require full column rank")
    u, _, _ = np.linalg.svd(a, full_matrices=False)
    return np.einsum("ij,ij->i", u, u) / d


def orthonormal_basis(a) -> np.ndarray:
    """Orthonormal basis (n x d) for the column span of a full-column-rank matrix."""
    q, _ = np.linalg.qr(as_matrix(a))
    return q


def random_orthogonal(dim: int, seed: int) -> np.ndarray:
    """Seeded Haar-distributed orthogonal matrix (QR with sign-fixed diagonal)."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    g = np.random.default_rng(seed).standard_normal((dim, dim))
    q, r = np.linalg.qr(g)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs
