"""Binary-feature reconstruction from the passive party's intermediate outputs.

Because ``Z_A = X_A W_A^T`` with a full-rank ``W_A``, the column span of the
recorded outputs equals that of ``X_A``.  Any binary input column is therefore
a binary vector in that span, and the attacks below search for such vectors:

* :func:`attack_linear_equations` enumerates every nonzero binary pattern on a
  ``d x d`` invertible row-submatrix and keeps the patterns whose extension to
  all rows is binary (exact, ``O(n 2^d)`` with Gray-code updates).
* :func:`attack_linear_regression` enumerates patterns on ``r`` leverage-score
  sampled rows and returns the binary vector closest to the span, which
  survives additive noise.
"""
from __future__ import annotations

import itertools
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import _kernels
from .data import Dataset
from .errors import (
    DegenerateTranscript,
    DimensionCap,
    DimensionMismatch,
    IndexOutOfRange,
    InvalidSubset,
    NoBinaryFeatures,
    RankDeficient,
)
from .linalg import (
    DEFAULT_RTOL,
    as_matrix,
    leverage_scores,
    numerical_rank,
    orthonormal_basis,
    select_independent,
)

DEFAULT_BINARY_TOL = 1e-4
DEFAULT_MAX_DIM = 30


@dataclass
class AttackMatrix:
    a: np.ndarray
    columns: list[int] = field(default_factory=list)

    def __post_init__(self):
        self.a = as_matrix(self.a, "attack matrix")
        if not self.columns:
            self.columns = list(range(self.a.shape[1]))

    @property
    def n(self) -> int:
        return self.a.shape[0]

    @property
    def d(self) -> int:
        return self.a.shape[1]


@dataclass
class AttackReport:
    algorithm: str
    solutions: list[np.ndarray]
    residuals: list[float]
    elapsed: float
    r_used: int | None = None
    params: dict = field(default_factory=dict)

    def bitstrings(self) -> list[str]:
        return ["".join("1" if b else "0" for b in s) for s in self.solutions]

    def to_json(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "solutions": self.bitstrings(),
            "residuals": self.residuals,
            "elapsed_seconds": self.elapsed,
            "r_used": self.r_used,
            "params": self.params,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "AttackReport":
        sols = [np.frombuffer(s.encode(), dtype=np.uint8) - ord("0") for s in obj["solutions"]]
        return cls(obj["algorithm"], [s.astype(np.uint8) for s in sols], list(obj["residuals"]),
                   obj["elapsed_seconds"], obj.get("r_used"), obj.get("params", {}))

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1)


# ------------------------------------------------------------ attack matrices


def build_attack_matrix(transcript_or_z, rtol: float = DEFAULT_RTOL, rank: int | None = None) -> AttackMatrix:
    """Select ``d`` independent columns of the stacked transcript.

    ``d`` is the numerical rank of ``Z_A`` unless ``rank`` is given.  Noisy
    transcripts are numerically full rank, so an attacker who knows the passive
    width passes ``rank=d_A`` and the pivoted QR picks the best-conditioned
    ``d_A`` columns.  Rows are ordered by row id.
    """
    if hasattr(transcript_or_z, "stacked"):
        if len(transcript_or_z) == 0:
            raise DegenerateTranscript("empty transcript")
        z = transcript_or_z.stacked()
        order = np.argsort(transcript_or_z.row_ids(), kind="stable")
        z = z[order]
    else:
        z = np.asarray(transcript_or_z, dtype=np.float64)
    if z.size == 0:
        raise DegenerateTranscript("empty transcript")
    d = numerical_rank(z, rtol) if rank is None else int(rank)
    if d == 0:
        raise DegenerateTranscript("transcript has rank 0")
    cols = select_independent(z, "cols", d, rtol)
    return AttackMatrix(z[:, cols], cols)


def eliminate_bias(a, pivot_row: int = 0) -> np.ndarray:
    """Subtract row ``pivot_row`` from every other row and drop it.

    A constant additive offset on every row (a bias in the bottom model) cancels,
    so the attack on the result recovers ``x_i - x_pivot`` for the other rows;
    when ``x_pivot = 0`` that is the binary column itself.
    """
    a = as_matrix(a)
    if not 0 <= pivot_row < a.shape[0]:
        raise IndexOutOfRange(f"pivot row {pivot_row} outside [0, {a.shape[0]})")
    rest = np.delete(a, pivot_row, axis=0)
    return rest - a[pivot_row]


def span_residual(a, x, basis: np.ndarray | None = None) -> np.ndarray | float:
    """``min_w ||a w - x||^2`` for a vector or for every column of a matrix."""
    q = orthonormal_basis(a) if basis is None else basis
    x = np.asarray(x, dtype=np.float64)
    r = x - q @ (q.T @ x)
    return float(r @ r) if r.ndim == 1 else np.einsum("ij,ij->j", r, r)


def _check_cap(d: int, max_dim: int, what: str) -> None:
    if d > max_dim:
        raise DimensionCap(
            f"{what} = {d} exceeds the cap of {max_dim}: the search visits 2^{d} candidates; "
            "raise max_dim explicitly if that is really intended"
        )


def _worker_count(workers: int | None) -> int:
    if workers is not None:
        return max(1, workers)
    env = os.environ.get("VFL_RECON_THREADS")
    return max(1, int(env)) if env else 1


def _bits(code: int, d: int) -> np.ndarray:
    return ((code >> np.arange(d)) & 1).astype(np.float64)


# --------------------------------------------------------- linear equations


def attack_linear_equations(
    am: AttackMatrix,
    binary_tol: float = DEFAULT_BINARY_TOL,
    max_dim: int = DEFAULT_MAX_DIM,
    rtol: float = DEFAULT_RTOL,
    workers: int | None = None,
    kernel: str = "gray",
) -> AttackReport:
    """Every nonzero binary vector in the column span of ``am.a`` (up to ``binary_tol``).

    Solutions are rounded to exact {0, 1}, deduplicated and sorted.  ``kernel``
    selects the compiled Gray-code scan (``"gray"``) or the numpy block scan.
    """
    t0 = time.perf_counter()
    a = am.a
    n, d = a.shape
    _check_cap(d, max_dim, "attack dimension d")
    if numerical_rank(a, rtol) != d:
        raise RankDeficient("attack matrix must have full column rank")
    rows = select_independent(a, "rows", d, rtol)
    # B = A A'^{-1}: its rows at `rows` form the identity, so B @ x' extends x'
    B = np.linalg.solve(a[rows].T, a.T).T
    total = 1 << d
    scan = _kernels.gray_scan if kernel == "gray" else _kernels.block_scan
    nw = _worker_count(workers)
    if nw == 1 or total < 1 << 12:
        codes = scan(B, binary_tol, 0, total)
    else:
        step = max(1 << 10, 1 << max(0, d - int(np.ceil(np.log2(4 * nw)))))
        chunks = [(s, min(s + step, total)) for s in range(0, total, step)]
        with ThreadPoolExecutor(nw) as pool:
            parts = pool.map(lambda c: scan(B, binary_tol, *c), chunks)
            codes = [g for part in parts for g in part]

    basis = orthonormal_basis(a)
    found: dict[bytes, np.ndarray] = {}
    for code in codes:
        x = B @ _bits(code, d)
        if np.all(np.abs(np.abs(x - 0.5) - 0.5) <= binary_tol):
            xb = np.rint(x).astype(np.uint8)
            if xb.any():
                found.setdefault(xb.tobytes(), xb)
    sols = [found[k] for k in sorted(found, reverse=True)]
    residuals = [span_residual(a, s, basis) for s in sols]
    return AttackReport(
        "equations", sols, residuals, time.perf_counter() - t0,
        params={"binary_tol": binary_tol, "d": d, "n": n, "submatrix_rows": rows},
    )


# -------------------------------------------------------- linear regression


def attack_linear_regression(
    am: AttackMatrix,
    r: int | None = None,
    seed: int = 0,
    trials: int = 1,
    max_dim: int = DEFAULT_MAX_DIM,
    rtol: float = DEFAULT_RTOL,
    block_elems: int = 1 << 20,
    objective: str = "relative",
) -> AttackReport:
    """Binary vector closest to the column span, via leverage-score sampling.

    Each trial samples ``r`` rows with replacement from the leverage-score
    distribution, rescales them by ``1 / sqrt(r p_i)``, and for every nonzero
    pattern ``x'`` on the sample fits ``w'`` by least squares.  The candidate
    copies ``x'`` on the sampled rows and thresholds ``(A w')_i`` at 0.5
    elsewhere.  Together with ``e_1`` the candidate with the smallest distance
    to the span wins; across trials the global minimum is kept, ties going to
    the lexicographically smallest vector.  Patterns that assign different bits
    to a row drawn twice are skipped, since no binary vector restricts to them.

    ``objective="absolute"`` ranks candidates by ``min_w ||A w - x||^2``.  Under
    noise every sparse vector (``e_1`` included) then beats the planted feature,
    whose distance grows with ``n``; the default ``"relative"`` divides by
    ``||x||^2`` so the ranking is scale-free.  The reported residual is always
    the absolute one.
    """
    if objective not in ("relative", "absolute"):
        raise ValueError(f"objective must be 'relative' or 'absolute', got {objective!r}")
    t0 = time.perf_counter()
    a = am.a
    n, d = a.shape
    r = d + 1 if r is None else int(r)
    if r < d:
        raise ValueError(f"r={r} must be at least d={d}")
    _check_cap(r, max_dim, "sample size r")
    p = leverage_scores(a, rtol)
    basis = orthonormal_basis(a)
    rng = np.random.default_rng(seed)

    e1 = np.zeros(n, dtype=np.uint8)
    e1[0] = 1
    best_res = span_residual(a, e1.astype(np.float64), basis)  # ||e1||^2 = 1 either way
    best = e1
    batch = max(1, min(1 << r, block_elems // max(n, 1)))

    for _ in range(trials):
        idx = rng.choice(n, size=r, replace=True, p=p)
        scale = 1.0 / np.sqrt(r * p[idx])
        sub = scale[:, None] * a[idx]
        # A w' = A pinv(D S A) D x' for every pattern x'
        M = (a @ np.linalg.pinv(sub)) * scale[None, :]
        groups = [np.flatnonzero(idx == i) for i in np.unique(idx)]
        dup = [g for g in groups if g.size > 1]
        for lo in range(1, 1 << r, batch):
            codes = np.arange(lo, min(lo + batch, 1 << r))
            bits = ((codes[None, :] >> np.arange(r)[:, None]) & 1).astype(np.float64)
            if dup:
                keep = np.ones(codes.size, dtype=bool)
                for g in dup:
                    keep &= (bits[g] == bits[g[0]]).all(axis=0)
                bits = bits[:, keep]
                if not bits.shape[1]:
                    continue
            cand = (M @ bits >= 0.5).astype(np.float64)
            cand[idx, :] = bits
            res = span_residual(a, cand, basis)
            if objective == "relative":
                res = res / cand.sum(axis=0)
            j = int(np.argmin(res))
            ties = np.flatnonzero(res == res[j])
            if len(ties) > 1:
                j = min(ties, key=lambda c: tuple(cand[:, c]))
            xb = cand[:, j].astype(np.uint8)
            if res[j] < best_res or (res[j] == best_res and tuple(xb) < tuple(best)):
                best_res, best = float(res[j]), xb

    best_res = span_residual(a, best.astype(np.float64), basis)
    return AttackReport(
        "regression", [best], [best_res], time.perf_counter() - t0, r_used=r,
        params={"r": r, "trials": trials, "seed": seed, "d": d, "n": n, "objective": objective},
    )


# ------------------------------------------------------------------- scoring


def candidate_features(ds: Dataset, passive_cols: Sequence[int], max_group: int = 16) -> list[np.ndarray]:
    """True passive binary columns plus every nonzero sum inside each one-hot group."""
    passive = set(passive_cols)
    out = [ds.features[:, j] for j in ds.binary_columns() if j in passive]
    for cols in ds.onehot_groups().values():
        cols = [j for j in cols if j in passive]
        if len(cols) > max_group:
            raise ValueError(f"one-hot group of {len(cols)} columns is too large to enumerate")
        for size in range(1, len(cols) + 1):
            for combo in itertools.combinations(cols, size):
                out.append(ds.features[:, list(combo)].sum(axis=1))
    return out


def attack_accuracy(x_star, ds: Dataset, passive_cols: Sequence[int]) -> float:
    """Best coordinate-match fraction between ``x_star`` and any true binary feature."""
    x_star = np.asarray(x_star).reshape(-1)
    if x_star.shape[0] != ds.n:
        raise DimensionMismatch(f"x* has length {x_star.shape[0]}, dataset has {ds.n} rows")
    feats = candidate_features(ds, passive_cols)
    if not feats:
        raise NoBinaryFeatures("no binary feature on the passive side")
    return max(float(np.mean(x_star == f)) for f in feats)


# --------------------------------------------------------------- exact cover


def reduce_exact_cover(n: int, subsets: Sequence[Iterable[int]]) -> np.ndarray:
    """Stack ``[I_{m+1}; incidence | -1; 2|S_j| ... -2n]`` for an Exact Cover instance.

    Elements are 0-based: each subset holds indices in ``[0, n)``.  The result
    has a nonzero binary vector in its column span iff an exact cover exists.
    """
    subsets = [set(s) for s in subsets]
    m = len(subsets)
    if n < 1 or m < 1:
        raise InvalidSubset("need n >= 1 elements and m >= 1 subsets")
    for s in subsets:
        if not s:
            raise InvalidSubset("subsets must be nonempty")
        if any(not 0 <= e < n for e in s):
            raise InvalidSubset(f"subset {sorted(s)} has an element outside [0, {n})")
    a1 = np.eye(m + 1)
    a2 = np.zeros((n, m + 1))
    for j, s in enumerate(subsets):
        a2[list(s), j] = 1.0
    a2[:, m] = -1.0
    a3 = np.array([[2.0 * len(s) for s in subsets] + [-2.0 * n]])
    return np.vstack([a1, a2, a3])


def is_exact_cover(n: int, subsets: Sequence[Iterable[int]], chosen: Iterable[int]) -> bool:
    counts = np.zeros(n, dtype=int)
    for j in chosen:
        for e in subsets[j]:
            counts[e] += 1
    return bool(np.all(counts == 1))


def solve_exact_cover_via_attack(
    n: int, subsets: Sequence[Iterable[int]], max_dim: int = DEFAULT_MAX_DIM
) -> tuple[bool, list[int] | None]:
    """Decide Exact Cover by searching the reduction matrix for a binary span vector.

    The first ``m + 1`` coordinates of any solution equal ``w`` itself; the
    chosen subsets are those with ``w_j = 1``.
    """
    subsets = [sorted(set(s)) for s in subsets]
    a = reduce_exact_cover(n, subsets)
    m = len(subsets)
    _check_cap(m + 1, max_dim, "reduction dimension m + 1")
    report = attack_linear_equations(AttackMatrix(a), max_dim=max_dim)
    covers = []
    for x in report.solutions:
        w = x[: m + 1]
        chosen = [j for j in range(m) if w[j] == 1]
        if w[m] == 1 and is_exact_cover(n, subsets, chosen):
            covers.append(chosen)
    if report.solutions and not covers:  # would contradict the reduction
        raise AssertionError("binary span vector found but no exact cover extracted")
    if not covers:
        return False, None
    return True, min(covers)
