"""Passive-party defenses: Gaussian noise masking and the masquerade scheme.

The masquerade replaces the passive weight ``W_A`` with a rank ``d_A - 1``
product ``P @ Q`` and appends a learned direction ``u`` that is switched on by
a random per-sample bit ``a``.  The bit vector then lies in the column span of
the transmitted outputs while the true binary features no longer do.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, InvalidArchitecture
from .linalg import DEFAULT_RTOL, numerical_rank
from .model import glorot_uniform


@dataclass(frozen=True)
class GaussianDefense:
    sigma: float

    def __post_init__(self):
        if not np.isfinite(self.sigma) or self.sigma < 0:
            raise ValueError(f"sigma must be finite and >= 0, got {self.sigma}")


@dataclass(frozen=True)
class MasqueradeDefense:
    """Marker config; parameters live in :class:`MasqueradeParams`."""


def gaussian_masked_forward(W_A, x_A, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """``x_A @ W_A.T`` plus fresh i.i.d. N(0, sigma^2) noise; no draw when sigma == 0."""
    x_A = np.atleast_2d(np.asarray(x_A, dtype=np.float64))
    if x_A.shape[1] != W_A.shape[1]:
        raise DimensionMismatch(f"x_A width {x_A.shape[1]} != W_A width {W_A.shape[1]}")
    z = x_A @ W_A.T
    if sigma > 0:
        z += rng.normal(0.0, sigma, size=z.shape)
    return z


@dataclass
class MasqueradeParams:
    P: np.ndarray  # k x (d_A - 1)
    Q: np.ndarray  # (d_A - 1) x d_A
    u: np.ndarray  # k

    @property
    def k(self) -> int:
        return self.P.shape[0]

    @property
    def d_A(self) -> int:
        return self.Q.shape[1]

    def params(self) -> dict[str, np.ndarray]:
        return {"P": self.P, "Q": self.Q, "u": self.u}

    def effective_weight(self) -> np.ndarray:
        return self.P @ self.Q

    def copy(self) -> "MasqueradeParams":
        return MasqueradeParams(self.P.copy(), self.Q.copy(), self.u.copy())


def init_masquerade(k: int, d_A: int, rng: np.random.Generator, rtol: float = DEFAULT_RTOL) -> MasqueradeParams:
    """Scaled-uniform P, Q, u with rank(PQ) = d_A - 1 and u outside span(P)."""
    if d_A < 2:
        raise InvalidArchitecture("masquerade needs d_A >= 2")
    if k < d_A:
        raise InvalidArchitecture("masquerade needs k >= d_A")
    for _ in range(100):
        P = glorot_uniform(rng, k, d_A - 1)
        Q = glorot_uniform(rng, d_A - 1, d_A)
        bound = np.sqrt(6.0 / (k + 1))
        u = rng.uniform(-bound, bound, size=k)
        if numerical_rank(P @ Q, rtol) == d_A - 1 and numerical_rank(np.column_stack([P, u]), rtol) == d_A:
            return MasqueradeParams(P, Q, u)
    raise InvalidArchitecture("could not draw masquerade parameters of the required rank")  # pragma: no cover


def _check_batch(mp: MasqueradeParams, x_A, a) -> tuple[np.ndarray, np.ndarray]:
    x_A = np.atleast_2d(np.asarray(x_A, dtype=np.float64))
    if x_A.shape[1] != mp.d_A:
        raise DimensionMismatch(f"x_A width {x_A.shape[1]} != d_A {mp.d_A}")
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    if a.shape[0] != x_A.shape[0]:
        raise DimensionMismatch("need one fabricated bit per row")
    return x_A, a


def masquerade_forward(mp: MasqueradeParams, x_A, a) -> np.ndarray:
    """``z_A = P (Q x_A) + a u`` for every row."""
    x_A, a = _check_batch(mp, x_A, a)
    return (x_A @ mp.Q.T) @ mp.P.T + np.outer(a, mp.u)


def masquerade_backward(mp: MasqueradeParams, x_A, a, dL_dz) -> dict[str, np.ndarray]:
    """Gradients of the loss w.r.t. P, Q and u, summed over the batch rows."""
    x_A, a = _check_batch(mp, x_A, a)
    dz = np.atleast_2d(np.asarray(dL_dz, dtype=np.float64))
    if dz.shape != (x_A.shape[0], mp.k):
        raise DimensionMismatch(f"dL_dz has shape {dz.shape}, expected {(x_A.shape[0], mp.k)}")
    qx = x_A @ mp.Q.T
    return {
        "P": dz.T @ qx,
        "Q": mp.P.T @ dz.T @ x_A,
        "u": dz.T @ a,
    }


def preprocess_full_rank(X_A, rtol: float = DEFAULT_RTOL) -> tuple[np.ndarray, list[int]]:
    """Drop columns that are linear combinations of earlier ones."""
    X_A = np.atleast_2d(np.asarray(X_A, dtype=np.float64))
    kept: list[int] = []
    dropped: list[int] = []
    for j in range(X_A.shape[1]):
        trial = kept + [j]
        if numerical_rank(X_A[:, trial], rtol) == len(trial):
            kept.append(j)
        else:
            dropped.append(j)
    return X_A[:, kept], dropped
