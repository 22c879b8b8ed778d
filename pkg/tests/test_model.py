import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import logsumexp

from gradcheck import numeric_grad, rel_error
from vfl_recon.errors import DimensionMismatch, InvalidArchitecture
from vfl_recon.model import (
    OptimizerState,
    VflModel,
    forward_centralized,
    forward_split,
    glorot_uniform,
    init_model,
    load_checkpoint,
    loss_and_grads,
    save_checkpoint,
    sgd_momentum_step,
)


def batch(seed, m, d, classes=3):
    g = np.random.default_rng(seed)
    return g.standard_normal((m, d)), g.integers(0, classes, m)


def ce_oracle(model: VflModel, x, y, wd):
    logits = forward_centralized(model, x)
    ce = np.mean(logsumexp(logits, axis=1) - logits[np.arange(len(y)), y])
    sq = sum((p**2).sum() for name, p in model.params().items() if not name.endswith(".b"))
    return ce + 0.5 * wd * sq


@pytest.mark.parametrize("wd", [0.0, 1e-2])
@pytest.mark.parametrize("seed", range(4))
def test_gradients_match_finite_differences(seed, wd):
    m = init_model(3, 2, [7, 5], 3, seed)
    x, y = batch(seed, 6, 5)
    _, grads, _ = loss_and_grads(m, x, y, wd)
    for name, p in m.params().items():
        num = numeric_grad(lambda: ce_oracle(m, x, y, wd), p)
        assert rel_error(grads[name], num) < 1e-4, name


def test_loss_matches_oracle():
    m = init_model(2, 3, [6, 4], 2, 1)
    x, y = batch(1, 10, 5, 2)
    loss, _, _ = loss_and_grads(m, x, y, 0.05)
    assert loss == pytest.approx(ce_oracle(m, x, y, 0.05), rel=1e-12)


def test_dz_matches_finite_differences():
    m = init_model(2, 2, [5, 3], 2, 7)
    x, y = batch(7, 4, 4, 2)
    z = x[:, :2] @ m.W_A.T + x[:, 2:] @ m.W_B.T
    _, _, dz = m.top.loss_and_grads(z, y)

    def f():
        logits, _ = m.top.forward(z)
        return np.mean(logsumexp(logits, axis=1) - logits[np.arange(4), y])

    assert rel_error(dz, numeric_grad(f, z)) < 1e-4


@given(st.integers(0, 10**6), st.integers(1, 5), st.integers(0, 5))
def test_split_forward_equals_centralized(seed, d_A, d_B):
    m = init_model(d_A, d_B, [d_A + d_B + 3, 4], 3, seed)
    x, _ = batch(seed, 5, d_A + d_B)
    split = forward_split(m, x[:, :d_A], x[:, d_A:])
    assert np.abs(split - forward_centralized(m, x)).max() <= 1e-9


def test_forward_single_vector_and_width_check():
    m = init_model(2, 1, [4, 3], 2, 0)
    x = np.array([0.5, -1.0, 2.0])
    assert forward_centralized(m, x).shape == (2,)
    assert np.allclose(forward_centralized(m, x), forward_split(m, x[:2], x[2:])[0])
    with pytest.raises(DimensionMismatch):
        forward_centralized(m, np.ones(4))


def test_init_model_architecture_checks():
    m = init_model(3, 4, [10, 6], 2, 0)
    assert m.W_A.shape == (10, 3) and m.W_B.shape == (10, 4) and m.k == 10
    assert [w.shape for w, _ in m.hidden] == [(6, 10), (2, 6)]
    assert all(np.all(b == 0) for _, b in m.hidden)
    with pytest.raises(InvalidArchitecture):
        init_model(5, 5, [9], 2, 0)
    with pytest.raises(InvalidArchitecture):
        init_model(1, 1, [], 2, 0)


def test_glorot_bounds(rng):
    w = glorot_uniform(rng, 200, 100)
    bound = np.sqrt(6 / 300)
    assert np.abs(w).max() <= bound
    assert abs(w.var() - bound**2 / 3) < 0.05 * bound**2


def test_learning_rate_schedule():
    s = OptimizerState(base_lr=0.1)
    assert [s.lr(e) for e in (0, 29, 30, 59, 60, 89, 90, 99)] == pytest.approx(
        [0.1, 0.1, 0.01, 0.01, 0.001, 0.001, 1e-4, 1e-4]
    )


def test_sgd_momentum_by_hand():
    p = {"w": np.array([1.0, -2.0])}
    s = OptimizerState(momentum=0.5, base_lr=0.1, decay_epochs=(1,))
    sgd_momentum_step(p, s, {"w": np.array([1.0, 1.0])}, 0)
    # v = g = (1, 1); p = (0.9, -2.1)
    assert np.allclose(p["w"], [0.9, -2.1])
    sgd_momentum_step(p, s, {"w": np.array([2.0, 0.0])}, 1)
    # v = 0.5 v + g = (2.5, 0.5); lr = 0.01
    assert np.allclose(p["w"], [0.875, -2.105])
    with pytest.raises(DimensionMismatch):
        sgd_momentum_step(p, s, {"w": np.ones(3)}, 0)


def test_checkpoint_roundtrip(tmp_path):
    m = init_model(3, 2, [6, 4], 3, 5)
    state = OptimizerState()
    x, y = batch(0, 8, 5)
    _, grads, _ = loss_and_grads(m, x, y, 1e-4)
    sgd_momentum_step(m.params(), state, grads, 0)
    save_checkpoint(m, tmp_path / "ck", 7, state, extra={"tag": "x"})
    back, st_back, epoch = load_checkpoint(tmp_path / "ck")
    assert epoch == 7
    for name, p in m.params().items():
        assert np.array_equal(back.params()[name], p)
    for name, v in state.buffers.items():
        assert np.array_equal(st_back.buffers[name], v)
    assert np.array_equal(forward_centralized(back, x), forward_centralized(m, x))
