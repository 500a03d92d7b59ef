import numpy as np
import pytest

from helpers import projection_loss, video
from oracles import me_direct
from teanet.core import Tape, Tensor
from teanet.core.gradcheck import check_module_grads
from teanet.me import (
    MEModule,
    SEModule,
    me_attention,
    me_forward,
    me_forward_no_residual,
    motion_features,
    se_forward,
    se_gate,
)


def _randomize(m, rng):
    m.conv_red.set_weights(m.conv_red.weight.data, rng.standard_normal(m.conv_red.out_channels))
    m.conv_trans.set_weights(rng.standard_normal(m.conv_trans.weight.shape))
    m.conv_exp.set_weights(m.conv_exp.weight.data, rng.standard_normal(m.conv_exp.out_channels))
    return m


def _oracle(m, x, residual=True):
    return me_direct(x, m.conv_red.weight.data[:, :, 0], m.conv_red.bias.data,
                     m.conv_trans.weight.data[:, :, 0], m.conv_exp.weight.data[:, :, 0],
                     m.conv_exp.bias.data, residual=residual)


@pytest.mark.parametrize("t", [1, 2, 5])
def test_me_forward_matches_formula_oracle(rng, t):
    m = _randomize(MEModule(16, 4, rng=rng), rng)
    x = rng.standard_normal((2, t, 16, 4, 3)).astype(np.float32)
    assert np.abs(me_forward(m, Tensor(x)).data - _oracle(m, x)).max() < 1e-5
    assert np.abs(me_forward_no_residual(m, Tensor(x)).data - _oracle(m, x, False)).max() < 1e-5


def test_fresh_conv_trans_gives_plain_differences(rng):
    m = MEModule(8, 2, rng=rng)
    x = rng.standard_normal((1, 4, 8, 3, 3))
    xr = np.einsum("oc,ntchw->ntohw", m.conv_red.weight.data[:, :, 0, 0, 0], x)
    mf = motion_features(m, Tensor(x)).data
    np.testing.assert_allclose(mf[:, :3], xr[:, 1:] - xr[:, :3], atol=1e-5)
    assert not mf[:, 3].any()


def test_zeroed_expansion_is_exact_identity(rng):
    m = MEModule(32, 8, rng=rng)
    m.conv_exp.set_weights(np.zeros(m.conv_exp.weight.shape), np.zeros(32))
    x = Tensor(rng.standard_normal((2, 4, 32, 5, 5)).astype(np.float32))
    assert np.array_equal(me_forward(m, x).data, x.data)


def test_attention_strictly_inside_unit_interval(rng):
    for _ in range(200):
        m = MEModule(16, 4, rng=rng)
        a = me_attention(m, Tensor(rng.standard_normal((1, 3, 16, 2, 2)).astype(np.float32))).data
        assert a.shape == (1, 3, 16, 1, 1)
        assert np.all(a > -1) and np.all(a < 1)


def test_static_clip_has_zero_attention(rng):
    m = MEModule(8, 2, rng=rng)
    frame = rng.standard_normal((1, 1, 8, 3, 3))
    x = Tensor(np.repeat(frame, 4, axis=1))
    # conv_exp bias is zero at init, so zero motion gives A = 2*sigmoid(0) - 1 = 0
    assert np.abs(me_attention(m, x).data).max() < 1e-12


def test_reduction_must_divide_channels():
    with pytest.raises(ValueError):
        MEModule(12, 8)


def test_channel_mismatch_raises(rng):
    with pytest.raises(ValueError):
        me_forward(MEModule(8, 2), video(rng, (1, 2, 4, 2, 2)))


def test_me_gradients(rng):
    m = _randomize(MEModule(8, 2, rng=rng), rng)
    errs = check_module_grads(projection_loss(me_forward), m, [video(rng, (1, 3, 8, 3, 3))], eps=1e-6)
    assert max(errs.values()) < 1e-4, errs


def test_me_with_batch_norm_gradients(rng):
    m = _randomize(MEModule(8, 2, rng=rng, use_bn=True), rng)
    x = video(rng, (2, 3, 8, 3, 3))
    errs = check_module_grads(projection_loss(me_forward), m, [x], eps=1e-6)
    # a bias feeding straight into batch norm is cancelled by the mean
    # subtraction: its exact gradient is zero and only noise is left to compare
    structural_zero = {"conv_red.bias", "conv_exp.bias"}
    assert max(v for k, v in errs.items() if k not in structural_zero) < 1e-4, errs
    m.zero_grad()
    with Tape() as tape:
        loss = projection_loss(me_forward)(m, x)
    g = tape.backward(loss)
    assert np.abs(g[m.conv_red.bias]).max() < 1e-10
    assert np.abs(g[m.conv_exp.bias]).max() < 1e-10


def test_se_gate_matches_formula(rng):
    p = SEModule(8, 2, rng=rng)
    x = rng.standard_normal((1, 2, 8, 3, 3))
    s = x.mean(axis=(3, 4))
    h = np.maximum(np.einsum("oc,ntc->nto", p.fc1.weight.data[:, :, 0, 0, 0], s) + p.fc1.bias.data, 0)
    g = 1 / (1 + np.exp(-(np.einsum("oc,ntc->nto", p.fc2.weight.data[:, :, 0, 0, 0], h) + p.fc2.bias.data)))
    np.testing.assert_allclose(se_gate(p, Tensor(x)).data[..., 0, 0], g, rtol=1e-6)


def test_se_is_frame_independent(rng):
    p = SEModule(8, 2, rng=rng)
    x = rng.standard_normal((1, 4, 8, 3, 3))
    y = se_forward(p, Tensor(x)).data
    y_rev = se_forward(p, Tensor(x[:, ::-1])).data
    np.testing.assert_allclose(y_rev[:, ::-1], y, atol=1e-12)


def test_se_gradients(rng):
    p = SEModule(8, 2, rng=rng)
    errs = check_module_grads(projection_loss(se_forward), p, [video(rng, (1, 3, 8, 3, 3))], eps=1e-6)
    assert max(errs.values()) < 1e-4, errs


def test_frame_reversal_changes_attention(rng):
    m = _randomize(MEModule(8, 2, rng=rng), rng)
    x = rng.standard_normal((1, 5, 8, 3, 3))
    a = me_attention(m, Tensor(x)).data
    a_rev = me_attention(m, Tensor(x[:, ::-1].copy())).data[:, ::-1]
    assert np.abs(a - a_rev).max() > 1e-6


def _impulse_batch(rng, n=64, t=4, h=6):
    """Channel 0: a one-pixel impulse that moves 2 px/frame and leaves the
    frame (odd clips: it stays put). Channel 1: a static random pattern."""
    x = np.zeros((n, t, 2, h, h))
    moving = np.arange(n) % 2 == 0
    for i in range(n):
        r, c0 = rng.integers(h, size=2)
        for tt in range(t):
            c = c0 + 2 * tt if moving[i] else c0
            if c < h:
                x[i, tt, 0, r, c] = 1.0
        x[i, :, 1] = rng.random((h, h))
    return x, moving.astype(int)


def test_trained_gate_favours_the_moving_channel_but_not_because_of_motion():
    from teanet.core import ops
    from teanet.core.optim import SgdState, sgd_step

    rng = np.random.default_rng(0)
    x, y = _impulse_batch(rng)
    m = MEModule(2, 1, rng=rng).astype(np.float64)
    xt = Tensor(x)
    readout = Tensor(np.array([[0.0, 0.0], [10.0, 10.0]]))
    params = [m.conv_exp.weight, m.conv_exp.bias]   # only the expansion conv learns
    opt = SgdState(0.05, 0.9, 0.0)
    for _ in range(200):
        with Tape() as tape:
            excited = ops.sub(me_forward(m, xt), xt)
            feats = ops.reshape(ops.mean_axis(ops.global_avg_pool_spatial(excited), 1), (len(y), 2))
            loss = ops.softmax_cross_entropy(ops.linear(feats, readout), y)
        g = tape.backward(loss)
        sgd_step(params, {p: g[p] for p in params}, opt)
    a = np.abs(me_attention(m, xt).data[:, :, :, 0, 0])
    on_moving = a[y == 1].mean(axis=(0, 1))
    on_still = a[y == 0].mean(axis=(0, 1))
    # the stated selectivity holds ...
    assert on_moving[0] > on_moving[1]
    # ... but the gate is the same on clips where nothing moves: spatial
    # pooling cancels a translation inside the frame, so the gap comes from
    # the learned bias, not from the motion
    assert abs(on_moving[0] - on_still[0]) < 0.05
