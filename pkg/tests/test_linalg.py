import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vfl_recon.errors import DimensionMismatch, RankDeficient
from vfl_recon.linalg import (
    PinvSolver,
    as_matrix,
    least_squares,
    leverage_scores,
    numerical_rank,
    orthonormal_basis,
    random_orthogonal,
    select_independent,
)


def gram_schmidt_rank(a, tol=1e-9):
    """Independent oracle: modified Gram-Schmidt on the columns, counting survivors."""
    basis = []
    scale = max(np.abs(a).max(), 1.0)
    for col in a.T:
        v = col.astype(float).copy()
        for q in basis:
            v -= (q @ v) * q
        for q in basis:  # second pass for stability
            v -= (q @ v) * q
        nv = np.linalg.norm(v)
        if nv > tol * scale * np.sqrt(a.shape[0]):
            basis.append(v / nv)
    return len(basis)


def hat_diagonal(a):
    """Oracle: diag(A (A^T A)^{-1} A^T) / d via normal equations."""
    h = a @ np.linalg.solve(a.T @ a, a.T)
    return np.diag(h) / a.shape[1]


@st.composite
def low_rank(draw):
    n = draw(st.integers(2, 12))
    d = draw(st.integers(1, 8))
    r = draw(st.integers(0, min(n, d)))
    seed = draw(st.integers(0, 10**6))
    g = np.random.default_rng(seed)
    if r == 0:
        return np.zeros((n, d)), 0
    left = g.integers(-3, 4, (n, r)).astype(float)
    right = g.integers(-3, 4, (r, d)).astype(float)
    a = left @ right
    return a, None


@given(low_rank())
def test_rank_matches_gram_schmidt(case):
    a, known = case
    got = numerical_rank(a)
    assert got == gram_schmidt_rank(a)
    if known is not None:
        assert got == known


def test_rank_of_zero_and_identity():
    assert numerical_rank(np.zeros((4, 3))) == 0
    assert numerical_rank(np.eye(5)) == 5
    assert numerical_rank(np.ones((6, 4))) == 1


def test_rank_rejects_bad_tolerance():
    with pytest.raises(ValueError):
        numerical_rank(np.eye(2), rtol=0.0)


def test_as_matrix_validation():
    assert as_matrix([1.0, 2.0]).shape == (2, 1)
    with pytest.raises(ValueError):
        as_matrix([[1.0, np.nan]])
    with pytest.raises(DimensionMismatch):
        as_matrix(np.zeros((0, 3)))


@given(st.integers(0, 10**6), st.integers(1, 6), st.integers(0, 4))
def test_select_independent_columns_spans(seed, d, extra):
    g = np.random.default_rng(seed)
    base = g.standard_normal((12, d))
    a = np.hstack([base, base @ g.standard_normal((d, extra))])
    a = a[:, g.permutation(a.shape[1])]
    cols = select_independent(a, "cols", d)
    assert len(set(cols)) == d
    assert numerical_rank(a[:, cols]) == d
    # the chosen columns span everything
    assert numerical_rank(np.hstack([a[:, cols], a])) == d


def test_select_independent_rows_and_errors(rng):
    a = rng.standard_normal((9, 3))
    rows = select_independent(a, "rows", 3)
    assert abs(np.linalg.det(a[rows])) > 1e-8
    with pytest.raises(RankDeficient):
        select_independent(np.ones((5, 3)), "cols", 2)
    with pytest.raises(RankDeficient):
        select_independent(a, "cols", 4)
    with pytest.raises(ValueError):
        select_independent(a, "diagonal", 1)


def test_select_independent_is_deterministic(rng):
    a = rng.standard_normal((20, 6))
    assert select_independent(a, "rows", 6) == select_independent(a.copy(), "rows", 6)


def test_pinv_solver_consistent_and_residual(rng):
    a = rng.standard_normal((10, 4))
    w_true = rng.standard_normal(4)
    w, res = PinvSolver(a).solve(a @ w_true)
    assert np.allclose(w, w_true, atol=1e-12)
    assert res < 1e-20
    # residual oracle: projection onto the orthogonal complement
    b = rng.standard_normal(10)
    _, res = least_squares(a, b)
    q, _ = np.linalg.qr(a)
    perp = b - q @ (q.T @ b)
    assert res == pytest.approx(perp @ perp, rel=1e-10)


def test_pinv_solver_matrix_rhs(rng):
    a = rng.standard_normal((8, 3))
    b = rng.standard_normal((8, 5))
    w, res = PinvSolver(a).solve(b)
    assert w.shape == (3, 5) and res.shape == (5,)
    for j in range(5):
        wj, rj = PinvSolver(a).solve(b[:, j])
        assert np.allclose(w[:, j], wj) and res[j] == pytest.approx(rj)


def test_least_squares_needs_tall_matrix(rng):
    with pytest.raises(DimensionMismatch):
        least_squares(rng.standard_normal((2, 3)), np.ones(2))
    with pytest.raises(DimensionMismatch):
        PinvSolver(np.eye(3)).solve(np.ones(4))


@given(st.integers(0, 10**6), st.integers(2, 40), st.integers(1, 6))
def test_leverage_scores_sum_and_hat_oracle(seed, extra, d):
    g = np.random.default_rng(seed)
    a = g.standard_normal((d + extra, d)) * g.uniform(0.1, 10, d)
    p = leverage_scores(a)
    assert abs(p.sum() - 1.0) <= 1e-10
    assert np.all(p >= 0)
    assert np.allclose(p, hat_diagonal(a), atol=1e-9, rtol=0)


def test_leverage_scores_invariant_under_column_mixing(rng):
    a = rng.standard_normal((30, 4))
    mix = rng.standard_normal((4, 4)) + 4 * np.eye(4)
    assert np.allclose(leverage_scores(a), leverage_scores(a @ mix), atol=1e-12)


def test_leverage_scores_known_values():
    # rows e1, e2, e1: hat diagonal is (1/2, 1, 1/2) -> divided by d = 2
    a = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]])
    assert np.allclose(leverage_scores(a), [0.25, 0.5, 0.25])
    with pytest.raises(RankDeficient):
        leverage_scores(np.ones((4, 2)))


def test_orthonormal_basis_spans(rng):
    a = rng.standard_normal((15, 4))
    q = orthonormal_basis(a)
    assert np.allclose(q.T @ q, np.eye(4), atol=1e-12)
    assert np.allclose(q @ (q.T @ a), a, atol=1e-10)


@given(st.integers(1, 12), st.integers(0, 10**6))
def test_random_orthogonal(dim, seed):
    u = random_orthogonal(dim, seed)
    assert np.abs(u.T @ u - np.eye(dim)).max() <= 1e-12
    assert np.array_equal(u, random_orthogonal(dim, seed))
