import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import logsumexp

from gradcheck import numeric_grad, rel_error
from vfl_recon.defense import (
    GaussianDefense,
    gaussian_masked_forward,
    init_masquerade,
    masquerade_backward,
    masquerade_forward,
    preprocess_full_rank,
)
from vfl_recon.errors import DimensionMismatch, InvalidArchitecture
from vfl_recon.linalg import numerical_rank
from vfl_recon.model import init_model


def test_gaussian_zero_sigma_is_exact_and_draws_nothing(rng):
    w = rng.standard_normal((5, 3))
    x = rng.standard_normal((4, 3))
    noise = np.random.default_rng(0)
    before = noise.bit_generator.state
    assert np.array_equal(gaussian_masked_forward(w, x, 0.0, noise), x @ w.T)
    assert noise.bit_generator.state == before


def test_gaussian_noise_statistics(rng):
    w = rng.standard_normal((10, 3))
    x = rng.standard_normal((20000, 3))
    z = gaussian_masked_forward(w, x, 0.5, np.random.default_rng(1))
    e = z - x @ w.T
    assert abs(e.mean()) < 0.01
    assert abs(e.std() - 0.5) < 0.01
    # fresh draws on each call
    z2 = gaussian_masked_forward(w, x[:5], 0.5, np.random.default_rng(1))
    z3 = gaussian_masked_forward(w, x[:5], 0.5, np.random.default_rng(2))
    assert not np.allclose(z2, z3)


def test_gaussian_validation(rng):
    with pytest.raises(ValueError):
        GaussianDefense(-1.0)
    with pytest.raises(DimensionMismatch):
        gaussian_masked_forward(np.ones((3, 2)), np.ones((1, 3)), 0.1, rng)


@given(st.integers(0, 10**6), st.integers(2, 6), st.integers(0, 5))
def test_masquerade_init_ranks(seed, d_A, extra):
    k = d_A + extra
    mp = init_masquerade(k, d_A, np.random.default_rng(seed))
    assert numerical_rank(mp.effective_weight()) == d_A - 1
    assert numerical_rank(np.column_stack([mp.P, mp.u])) == d_A


def test_masquerade_init_rejects_small_shapes(rng):
    with pytest.raises(InvalidArchitecture):
        init_masquerade(5, 1, rng)
    with pytest.raises(InvalidArchitecture):
        init_masquerade(3, 4, rng)


def test_masquerade_forward_formula(rng):
    mp = init_masquerade(6, 3, rng)
    x = rng.standard_normal((5, 3))
    a = np.array([1, 0, 1, 1, 0])
    z = masquerade_forward(mp, x, a)
    for i in range(5):
        assert np.allclose(z[i], mp.P @ (mp.Q @ x[i]) + a[i] * mp.u)
    with pytest.raises(DimensionMismatch):
        masquerade_forward(mp, x, a[:3])


@pytest.mark.parametrize("seed", range(5))
def test_masquerade_gradients_match_finite_differences(seed):
    g = np.random.default_rng(seed)
    d_A, k = 4, 7
    mp = init_masquerade(k, d_A, g)
    top = init_model(1, k - 1, [k, 5], 3, seed).top
    x = g.standard_normal((6, d_A))
    a = g.integers(0, 2, 6).astype(float)
    y = g.integers(0, 3, 6)

    def loss():
        logits, _ = top.forward(masquerade_forward(mp, x, a))
        return np.mean(logsumexp(logits, axis=1) - logits[np.arange(6), y])

    _, _, dz = top.loss_and_grads(masquerade_forward(mp, x, a), y)
    grads = masquerade_backward(mp, x, a, dz)
    for name, p in mp.params().items():
        assert rel_error(grads[name], numeric_grad(loss, p)) < 1e-4, name


def test_masquerade_backward_shape_check(rng):
    mp = init_masquerade(5, 3, rng)
    with pytest.raises(DimensionMismatch):
        masquerade_backward(mp, np.ones((2, 3)), np.ones(2), np.ones((2, 4)))


def test_preprocess_full_rank(rng):
    x = rng.standard_normal((50, 3))
    x = np.column_stack([x, x[:, 0] + x[:, 2], rng.standard_normal(50)])
    reduced, dropped = preprocess_full_rank(x)
    assert dropped == [3]
    assert reduced.shape == (50, 4)
    assert np.array_equal(reduced, x[:, [0, 1, 2, 4]])
