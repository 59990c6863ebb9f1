"""Primitive kernels against the finite-difference oracle and hand values."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from attentron.errors import (AttentionError, ConfigError, LengthError,
                              OptimizerError, ShapeError)
from attentron.nn import (Adam, AdamHyper, LSTMWeights, Parameter, Tensor,
                          adam_step, attn_mix, bce_logits_masked, bilstm,
                          broadcast_concat_rows, concat, conv1d, dropout,
                          embedding, fixed_mask_mul, grad_check, init_lstm,
                          linear, lstm_cell, lstm_seq, masked_mean_time,
                          masked_softmax, mse_masked, narrow, no_grad,
                          qk_scores, relu, reshape, scale, sigmoid, tanh,
                          weighted_sum)

RNG = np.random.default_rng(20240613)


def t64(shape, rng=RNG, lo=-1.0, hi=1.0):
    return Tensor(rng.uniform(lo, hi, size=shape).astype(np.float64), requires_grad=True)


# ---------------------------------------------------------------- linear

def test_linear_identity():
    x = Tensor(np.array([1.0, 2.0]))
    w = Tensor(np.eye(2))
    b = Tensor(np.zeros(2))
    y = linear(x, w, b)
    np.testing.assert_allclose(y.data, [1.0, 2.0])


def test_linear_hand_case():
    x = Tensor(np.array([1.0, 1.0]))
    w = Tensor(np.array([[2.0], [3.0]]))
    b = Tensor(np.array([0.5]))
    np.testing.assert_allclose(linear(x, w, b).data, [5.5])


def test_linear_shape_error_names_both_shapes():
    with pytest.raises(ShapeError) as exc:
        linear(Tensor(np.zeros((3, 4))), Tensor(np.zeros((5, 2))))
    assert "(3, 4)" in str(exc.value) and "(5, 2)" in str(exc.value)


@pytest.mark.parametrize("seed", range(20))
def test_linear_grad(seed):
    rng = np.random.default_rng(seed)
    x, w, b = t64((3, 4), rng), t64((4, 2), rng), t64((2,), rng)
    r = rng.standard_normal((3, 2))
    err = grad_check(lambda: weighted_sum(linear(x, w, b), r), [x, w, b])
    assert err < 1e-6


# ---------------------------------------------------------------- conv1d

def test_conv1d_ones_box_kernel():
    x = Tensor(np.ones((5, 1)))
    k = Tensor(np.ones((3, 1, 1)))
    y = conv1d(x, k)
    np.testing.assert_allclose(y.data[:, 0], [2.0, 3.0, 3.0, 3.0, 2.0])


def test_conv1d_impulse_response():
    x = np.zeros((7, 1))
    x[3, 0] = 1.0
    w = np.array([0.25, 0.5, -1.0])
    k = Tensor(w.reshape(3, 1, 1))
    y = conv1d(Tensor(x), k)
    # cross-correlation layout: kernel tap j multiplies input at t + j - 1
    np.testing.assert_allclose(y.data[2:5, 0], [-1.0, 0.5, 0.25])


def test_conv1d_rejects_even_kernel():
    with pytest.raises(ConfigError):
        conv1d(Tensor(np.ones((4, 1))), Tensor(np.ones((2, 1, 1))))


@pytest.mark.parametrize("seed", range(20))
def test_conv1d_grad(seed):
    rng = np.random.default_rng(100 + seed)
    x, k, b = t64((6, 2), rng), t64((3, 2, 3), rng), t64((3,), rng)
    r = rng.standard_normal((6, 3))
    err = grad_check(lambda: weighted_sum(conv1d(x, k, b), r), [x, k, b])
    assert err < 1e-6


def test_conv1d_batched_matches_single():
    rng = np.random.default_rng(7)
    xs = rng.standard_normal((2, 5, 3))
    k = Tensor(rng.standard_normal((3, 3, 4)))
    batched = conv1d(Tensor(xs), k).data
    for i in range(2):
        single = conv1d(Tensor(xs[i]), k).data
        np.testing.assert_allclose(batched[i], single, rtol=1e-12)


# ---------------------------------------------------------------- lstm

def _rand_lstm(name, d_in, hidden, rng, dtype=np.float64):
    w = init_lstm(name, d_in, hidden, rng, dtype=dtype)
    # randomize biases too so the gradient check exercises them
    w.b.data = rng.uniform(-0.5, 0.5, size=w.b.shape).astype(dtype)
    return w


def test_lstm_zero_weights_zero_output():
    rng = np.random.default_rng(0)
    w = init_lstm("z", 3, 2, rng, dtype=np.float64)
    for p in (w.w, w.u, w.b):
        p.data[:] = 0.0
    x = Tensor(rng.standard_normal((4, 3)))
    y = lstm_seq(x, w)
    np.testing.assert_array_equal(y.data, np.zeros((4, 2)))


def test_bilstm_time1_matches_two_independent_cells():
    rng = np.random.default_rng(1)
    fw = _rand_lstm("f", 3, 2, rng)
    bw = _rand_lstm("b", 3, 2, rng)
    x = Tensor(rng.standard_normal((1, 3)))
    y = bilstm(x, fw, bw).data
    zero = Tensor(np.zeros((1, 2), dtype=np.float64))
    hf = lstm_cell(Tensor(x.data[None, 0]), zero, zero, fw).data[:, :2]
    hb = lstm_cell(Tensor(x.data[None, 0]), zero, zero, bw).data[:, :2]
    np.testing.assert_allclose(y[0], np.concatenate([hf[0], hb[0]]), rtol=1e-12)


def test_lstm_empty_sequence_raises():
    rng = np.random.default_rng(2)
    w = init_lstm("e", 3, 2, rng)
    with pytest.raises(LengthError):
        lstm_seq(Tensor(np.zeros((0, 3))), w)


@pytest.mark.parametrize("seed", range(20))
def test_bilstm_bptt_grad(seed):
    rng = np.random.default_rng(200 + seed)
    fw = _rand_lstm("f", 3, 2, rng)
    bw = _rand_lstm("b", 3, 2, rng)
    x = t64((4, 3), rng)
    r = rng.standard_normal((4, 4))
    params = [x, fw.w, fw.u, fw.b, bw.w, bw.u, bw.b]
    err = grad_check(lambda: weighted_sum(bilstm(x, fw, bw), r), params)
    assert err < 1e-4


@pytest.mark.parametrize("seed", range(10))
def test_masked_lstm_grad(seed):
    rng = np.random.default_rng(300 + seed)
    w = _rand_lstm("m", 2, 3, rng)
    x = t64((2, 5, 2), rng)
    mask = np.array([[1, 1, 1, 0, 0], [1, 1, 1, 1, 1]], dtype=bool)
    r = rng.standard_normal((2, 5, 3))
    err = grad_check(lambda: weighted_sum(lstm_seq(x, w, mask=mask, reverse=bool(seed % 2)), r),
                     [x, w.w, w.u, w.b])
    assert err < 1e-4


def test_masked_lstm_padding_is_invisible():
    rng = np.random.default_rng(3)
    w = _rand_lstm("p", 2, 3, rng)
    xs = rng.standard_normal((1, 4, 2))
    for reverse in (False, True):
        base = lstm_seq(Tensor(xs), w, mask=np.ones((1, 4), dtype=bool), reverse=reverse).data
        padded = np.concatenate([xs, rng.standard_normal((1, 3, 2))], axis=1)
        mask = np.array([[True] * 4 + [False] * 3])
        out = lstm_seq(Tensor(padded), w, mask=mask, reverse=reverse).data
        np.testing.assert_array_equal(out[:, :4], base)
        np.testing.assert_array_equal(out[:, 4:], 0.0)


@pytest.mark.parametrize("seed", range(10))
def test_lstm_cell_grad(seed):
    rng = np.random.default_rng(400 + seed)
    w = _rand_lstm("c", 3, 2, rng)
    x, h, c = t64((2, 3), rng), t64((2, 2), rng), t64((2, 2), rng)
    r = rng.standard_normal((2, 4))
    err = grad_check(lambda: weighted_sum(lstm_cell(x, h, c, w), r),
                     [x, h, c, w.w, w.u, w.b])
    assert err < 1e-4


# ---------------------------------------------------------------- softmax

def test_softmax_uniform():
    y = masked_softmax(Tensor(np.zeros(4)))
    np.testing.assert_allclose(y.data, [0.25] * 4)


def test_softmax_mask_hides_position():
    y = masked_softmax(Tensor(np.zeros(3)), np.array([True, True, False]))
    np.testing.assert_allclose(y.data, [0.5, 0.5, 0.0])
    assert y.data[2] == 0.0


def test_softmax_no_overflow():
    y = masked_softmax(Tensor(np.array([1000.0, 0.0])))
    assert np.isfinite(y.data).all()
    np.testing.assert_allclose(y.data[0], 1.0)


def test_softmax_all_masked_raises():
    with pytest.raises(AttentionError):
        masked_softmax(Tensor(np.zeros(3)), np.zeros(3, dtype=bool))


@given(st.lists(st.floats(-50, 50), min_size=1, max_size=8),
       st.data())
@settings(max_examples=60, deadline=None)
def test_softmax_properties(logits, data):
    n = len(logits)
    mask = np.array(data.draw(st.lists(st.booleans(), min_size=n, max_size=n)))
    if not mask.any():
        mask[data.draw(st.integers(0, n - 1))] = True
    p = masked_softmax(Tensor(np.array(logits, dtype=np.float64)), mask).data
    assert (p >= 0).all()
    assert (p[~mask] == 0.0).all()
    assert abs(p.sum() - 1.0) < 1e-6


@pytest.mark.parametrize("seed", range(20))
def test_softmax_grad(seed):
    rng = np.random.default_rng(500 + seed)
    x = t64((2, 5), rng, lo=-2, hi=2)
    mask = rng.random((2, 5)) > 0.3
    mask[:, 0] = True
    r = rng.standard_normal((2, 5))
    err = grad_check(lambda: weighted_sum(masked_softmax(x, mask), r), [x])
    assert err < 1e-6


# ---------------------------------------------------------------- adam

def test_adam_zero_grad_fixed_point():
    p = Parameter("p", np.array([1.0, -2.0], dtype=np.float32))
    p.grad = np.zeros(2, dtype=np.float32)
    opt = Adam([p], AdamHyper(weight_decay=0.0))
    before = p.data.copy()
    opt.step(0.1)
    np.testing.assert_array_equal(p.data, before)


def test_adam_single_step_hand_value():
    p = Parameter("p", np.array([1.0], dtype=np.float64))
    p.grad = np.array([1.0])
    opt = Adam([p], AdamHyper(weight_decay=0.0))
    opt.step(0.1)
    # m_hat = v_hat = 1 after bias correction; update = 0.1 / (1 + 1e-8)
    assert abs(p.data[0] - 0.9) < 1e-8


def test_adam_deterministic_across_clones():
    rng = np.random.default_rng(8)
    data = rng.standard_normal(5).astype(np.float32)
    grad = rng.standard_normal(5).astype(np.float32)
    outs = []
    for _ in range(2):
        p = Parameter("p", data.copy())
        p.grad = grad.copy()
        opt = Adam([p])
        for _ in range(3):
            p.grad = grad.copy()
            opt.step(0.01)
        outs.append(p.data.copy())
    np.testing.assert_array_equal(outs[0], outs[1])


def test_adam_rejects_nonfinite_gradient():
    p = Parameter("theta", np.zeros(2, dtype=np.float32))
    p.grad = np.array([np.nan, 0.0], dtype=np.float32)
    with pytest.raises(OptimizerError) as exc:
        adam_step([p], Adam([p]).state, 0.1)
    assert "theta" in str(exc.value)


# ---------------------------------------------------------------- grad_check itself

def test_grad_check_exact_quadratic():
    # f(x) = sum(x**2): mse against a zero target times element count
    x = Tensor(np.array([1.0, 2.0]), requires_grad=True)

    def loss():
        return scale(mse_masked(reshape(x, (1, 1, 2)), np.zeros((1, 1, 2))), 2.0)

    err = grad_check(loss, [x])
    assert err < 1e-8
    loss().backward()  # analytic gradient is 2x
    l = loss()
    x.grad = None
    l.backward()
    np.testing.assert_allclose(x.grad, [2.0, 4.0], rtol=1e-12)


# ---------------------------------------------------------------- misc ops

@pytest.mark.parametrize("seed", range(10))
def test_misc_op_grads(seed):
    rng = np.random.default_rng(600 + seed)
    a, b = t64((2, 3), rng), t64((2, 3), rng)
    r = rng.standard_normal((2, 6))
    err = grad_check(lambda: weighted_sum(concat([tanh(a), sigmoid(b)], axis=-1), r), [a, b])
    assert err < 1e-6

    x = t64((2, 4, 3), rng)
    v = t64((2, 2), rng)
    r2 = rng.standard_normal((2, 4, 5))
    err = grad_check(lambda: weighted_sum(broadcast_concat_rows(x, v), r2), [x, v])
    assert err < 1e-6

    q = t64((2, 3), rng)
    keys = t64((2, 4, 3), rng)
    vals = t64((2, 4, 5), rng)
    mask = np.array([[1, 1, 0, 1], [1, 1, 1, 1]], dtype=bool)
    r3 = rng.standard_normal((2, 5))

    def attn():
        p = masked_softmax(scale(qk_scores(q, keys), 1 / np.sqrt(3)), mask)
        return weighted_sum(attn_mix(p, vals), r3)

    err = grad_check(attn, [q, keys, vals])
    assert err < 1e-5

    m = np.array([[1, 1, 0, 0], [1, 1, 1, 1]], dtype=bool)
    r4 = rng.standard_normal((2, 3))
    err = grad_check(lambda: weighted_sum(masked_mean_time(x, m), r4), [x])
    assert err < 1e-6

    tbl = t64((6, 3), rng)
    ids = np.array([[0, 2, 2], [5, 1, 0]])
    r5 = rng.standard_normal((2, 3, 3))
    err = grad_check(lambda: weighted_sum(embedding(tbl, ids), r5), [tbl])
    assert err < 1e-6

    z = t64((2, 4), rng, lo=-2, hi=2)
    y = (rng.random((2, 4)) > 0.5).astype(float)
    msk = np.array([[1, 1, 1, 0], [1, 1, 1, 1]], dtype=float)
    err = grad_check(lambda: bce_logits_masked(z, y, msk), [z])
    assert err < 1e-6

    pr = t64((2, 4, 3), rng)
    tgt = rng.standard_normal((2, 4, 3))
    fm = np.array([[1, 1, 0, 0], [1, 1, 1, 1]], dtype=float)
    err = grad_check(lambda: mse_masked(pr, tgt, fm), [pr])
    assert err < 1e-6

    d = t64((3, 4), rng)
    keep = (np.random.default_rng(seed).random((3, 4)) >= 0.5) / 0.5
    r6 = rng.standard_normal((3, 4))
    err = grad_check(lambda: weighted_sum(fixed_mask_mul(d, keep), r6), [d])
    assert err < 1e-6

    n = t64((2, 6), rng)
    r7 = rng.standard_normal((2, 2))
    err = grad_check(lambda: weighted_sum(narrow(relu(n), 1, 2, 2), r7), [n])
    assert err < 1e-6


def test_dropout_scales_kept_units():
    rng = np.random.default_rng(9)
    x = Tensor(np.ones((1000,)))
    y = dropout(x, 0.5, rng)
    kept = y.data[y.data != 0]
    np.testing.assert_allclose(kept, 2.0)


def test_no_grad_blocks_tape():
    x = Tensor(np.ones(3), requires_grad=True)
    with no_grad():
        y = tanh(x)
    assert y._backward is None and y._parents == ()


def test_forward_outputs_finite_on_finite_inputs():
    rng = np.random.default_rng(11)
    fw = _rand_lstm("f", 4, 3, rng)
    bw = _rand_lstm("b", 4, 3, rng)
    x = t64((3, 6, 4), rng, lo=-5, hi=5)
    y = bilstm(x, fw, bw)
    loss = mse_masked(y, np.zeros(y.shape))
    loss.backward()
    assert np.isfinite(y.data).all()
    assert np.isfinite(x.grad).all()


def test_determinism_same_seed_same_bits():
    def build():
        rng = np.random.default_rng(123)
        w = init_lstm("d", 3, 2, rng, dtype=np.float32)
        x = Tensor(np.random.default_rng(5).standard_normal((4, 3)).astype(np.float32))
        return lstm_seq(x, w).data.tobytes()
    assert build() == build()
