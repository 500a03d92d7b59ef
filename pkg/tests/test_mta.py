import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import projection_loss, video
from oracles import mta_direct
from teanet.analyzer import conv3x3_params, mta_params
from teanet.core import Tensor
from teanet.core.gradcheck import check_module_grads
from teanet.mta import (
    MTAModule,
    Res2NetSpatial,
    mta_forward,
    mta_probe_temporal_rf,
    parallel_res2net_forward,
    res2net_probe_temporal_rf,
)


def _oracle(m, x):
    temp = [k.weight.data[:, 0, :, 0, 0] for k in m.conv_temp]
    spa = [k.weight.data[:, :, 0] for k in m.conv_spa]
    return mta_direct(x, temp, spa, stride=m.stride)


@pytest.mark.parametrize("stride", [1, 2])
@pytest.mark.parametrize("init", ["shift", "random"])
def test_linear_cascade_matches_formula_oracle(rng, stride, init):
    m = MTAModule(16, stride=stride, rng=rng, activations=False, temporal_init=init)
    x = rng.standard_normal((2, 4, 16, 5, 5)).astype(np.float32)
    got = mta_forward(m, Tensor(x)).data
    want = _oracle(m, x)
    assert got.shape == want.shape == (2, 4, 16, 3 if stride == 2 else 5, 3 if stride == 2 else 5)
    assert np.abs(got - want).max() < 1e-5


def test_fragment_one_is_identity(rng):
    m = MTAModule(16, rng=rng)
    x = rng.standard_normal((1, 3, 16, 4, 4)).astype(np.float32)
    np.testing.assert_array_equal(mta_forward(m, Tensor(x)).data[:, :, :4], x[:, :, :4])


def test_zero_weights_leave_only_fragment_one(rng):
    m = MTAModule(8, activations=False)
    x = rng.standard_normal((1, 3, 8, 3, 3))
    y = mta_forward(m, Tensor(x)).data
    np.testing.assert_array_equal(y[:, :, :2], x[:, :, :2])
    assert not y[:, :, 2:].any()


def test_channels_must_split_in_four():
    with pytest.raises(ValueError):
        MTAModule(6)


@pytest.mark.parametrize("seed", range(5))
def test_impulse_probe_fragment_radii(seed):
    m = MTAModule(16, rng=np.random.default_rng(seed), temporal_init="random")
    assert mta_probe_temporal_rf(m, frames=9, seed=seed) == (0, 1, 2, 3)


def test_impulse_probe_with_shift_init():
    m = MTAModule(16, rng=np.random.default_rng(0))
    assert mta_probe_temporal_rf(m, frames=11, seed=1) == (0, 1, 2, 3)


def test_res2net_baseline_has_unit_radius():
    m = Res2NetSpatial(16, rng=np.random.default_rng(0), temporal_init="random")
    assert res2net_probe_temporal_rf(m, seed=0) == (1, 1, 1, 1)


def test_probe_needs_enough_frames():
    with pytest.raises(ValueError):
        mta_probe_temporal_rf(MTAModule(8, rng=np.random.default_rng(0)), frames=5)


@pytest.mark.parametrize("stride", [1, 2])
def test_mta_gradients(rng, stride):
    m = MTAModule(8, stride=stride, rng=rng, temporal_init="random")
    errs = check_module_grads(projection_loss(mta_forward), m, [video(rng, (2, 3, 8, 4, 4))], eps=1e-6)
    assert max(errs.values()) < 1e-4, errs


def test_res2net_gradients(rng):
    m = Res2NetSpatial(8, rng=rng, temporal_init="full")
    errs = check_module_grads(projection_loss(parallel_res2net_forward), m, [video(rng, (2, 3, 8, 3, 3))],
                              eps=1e-6)
    assert max(errs.values()) < 1e-4, errs


def test_param_count_closed_form():
    # 3 sub-convs of 3x3 on 16 channels, 3 channel-wise temporal kernels, BN scale/shift
    m = MTAModule(64, rng=np.random.default_rng(0))
    assert m.num_parameters() == 3 * 9 * 16 ** 2 + 3 * 3 * 16 + 3 * 2 * 16 == mta_params(64)
    assert mta_params(64) < 9 * 64 ** 2 == conv3x3_params(64) == 36864


@settings(max_examples=30, deadline=None)
@given(c=st.integers(1, 128).map(lambda k: 4 * k))
def test_param_economy_property(c):
    assert mta_params(c) < conv3x3_params(c)
    assert MTAModule(c, activations=False).num_parameters() == mta_params(c, activations=False)


def test_spatial_reach_per_fragment(rng):
    # one 3x3 conv per step down the cascade: fragment i sees i - 1 pixels out
    m = MTAModule(8, rng=rng, activations=False, temporal_init="random")
    x = np.zeros((1, 1, 8, 9, 9))
    x[..., 4, 4] = 1.0
    y = np.abs(mta_forward(m, Tensor(x)).data[0, 0])
    radii = []
    for frag in range(4):
        rows, cols = np.nonzero(y[2 * frag:2 * frag + 2].max(axis=0) > 1e-12)
        radii.append(int(max(np.abs(rows - 4).max(), np.abs(cols - 4).max())))
    assert radii == [0, 1, 2, 3]
