import numpy as np
import pytest

from helpers import projection_loss, video
from teanet.core import Tensor, ops
from teanet.core.gradcheck import check_module_grads
from teanet.graph import SymbolicNetwork
from teanet.me import me_forward
from teanet.mta import mta_forward
from teanet.net import (
    Block,
    BlockConfig,
    BlockVariant,
    NetworkSpec,
    StageSpec,
    TEABlock,
    TemporalFlavor,
    build_network,
    predict_video,
    preset,
    tea_block_forward,
    validate_spec,
)

ALL_VARIANTS = list(BlockVariant)


def _eval_block(b):
    return b.astype(np.float64).eval()


def _block_grad_errors(b, x):
    # Whole blocks mix ReLU kinks (which a large step can cross) with tiny
    # gradient entries (which round-off swamps at a small step); a correct
    # gradient passes at one of the two step sizes for every parameter.
    loss = projection_loss(lambda m, t: m.forward(t))
    a = check_module_grads(loss, b, [x], eps=1e-5)
    c = check_module_grads(loss, b, [x], eps=1e-6)
    return {k: min(a[k], c[k]) for k in a}


def test_toy_block_shape_contract(rng):
    b = TEABlock(16, 4, reduction=4, rng=rng)
    x = Tensor(rng.standard_normal((2, 3, 16, 5, 5)).astype(np.float32))
    assert tea_block_forward(b, x).shape == (2, 3, 16, 5, 5)
    assert b.proj is None


def test_projection_shortcut_rule(rng):
    assert TEABlock(16, 8, rng=rng, reduction=4).proj is not None       # 16 -> 32 channels
    assert TEABlock(32, 8, stride=2, rng=rng, reduction=4).proj is not None
    assert TEABlock(32, 8, rng=rng, reduction=4).proj is None


def test_output_must_be_four_times_bottleneck():
    with pytest.raises(ValueError):
        TEABlock(16, 4, out_channels=20)


def test_block_matches_independent_composition(rng):
    b = _eval_block(TEABlock(32, 8, stride=2, reduction=4, rng=rng))
    for bn in (b.bn1, b.bn3, b.bn_proj, *b.mta.bn):
        bn.running_mean = rng.standard_normal(bn.channels)
        bn.running_var = rng.uniform(0.5, 2.0, bn.channels)
    x = video(rng, (2, 4, 32, 6, 6))

    def bn_eval(v, bn):
        return (bn.scale.data[None, None, :, None, None] * (v - bn.running_mean[None, None, :, None, None])
                / np.sqrt(bn.running_var + bn.eps)[None, None, :, None, None] + bn.shift.data[None, None, :, None, None])

    def pw(v, k):
        w = k.weight.data[:, :, 0, 0, 0]
        s = k.stride
        return np.einsum("oc,ntchw->ntohw", w, v[:, :, :, ::s, ::s])

    h = np.maximum(bn_eval(pw(x.data, b.conv1), b.bn1), 0)
    h = me_forward(b.excite, Tensor(h)).data
    h = mta_forward(b.mta, Tensor(h)).data
    res = bn_eval(pw(h, b.conv3), b.bn3)
    sc = bn_eval(pw(x.data, b.proj), b.bn_proj)
    want = np.maximum(sc + res, 0)
    assert np.abs(tea_block_forward(b, x).data - want).max() < 1e-5


def test_dead_branch_reduces_to_relu_of_shortcut(rng):
    b = TEABlock(16, 4, reduction=4, rng=rng).eval()
    b.excite.conv_exp.set_weights(np.zeros(b.excite.conv_exp.weight.shape))
    for k in (*b.mta.conv_temp, *b.mta.conv_spa, b.conv3):
        k.set_weights(np.zeros(k.weight.shape))
    x = Tensor(rng.standard_normal((1, 3, 16, 4, 4)).astype(np.float32))
    # conv3 = 0 leaves BN's shift (0 at init) on the residual
    np.testing.assert_array_equal(b.forward(x).data, np.maximum(x.data, 0))


@pytest.mark.parametrize("variant", ALL_VARIANTS)
def test_every_variant_runs_and_checks_gradients(rng, variant):
    flavor = TemporalFlavor.CW if variant in (BlockVariant.P21D_RESNET, BlockVariant.P21D_RES2NET) else TemporalFlavor.SHIFT_INIT
    cfg = BlockConfig("b", 0, 8, 4, 16, 1, variant, flavor=flavor, reduction=2)
    b = Block(cfg, rng=rng)
    if b.excite is not None and hasattr(b.excite, "conv_trans"):
        b.excite.conv_trans.set_weights(rng.standard_normal(b.excite.conv_trans.weight.shape))
    x = video(rng, (2, 3, 8, 3, 3))
    assert b.forward(x).shape == (2, 3, 16, 3, 3)
    errs = _block_grad_errors(b, x)
    assert max(errs.values()) < 1e-4, errs


def test_full_tea_block_gradient_strided(rng):
    b = TEABlock(16, 8, stride=2, reduction=4, rng=rng)
    b.excite.conv_trans.set_weights(rng.standard_normal(b.excite.conv_trans.weight.shape))
    errs = _block_grad_errors(b, video(rng, (2, 3, 16, 4, 4)))
    assert max(errs.values()) < 1e-4, errs


def test_toy_spec_smoke():
    spec = NetworkSpec([StageSpec(1, 4, 16, 1), StageSpec(1, 8, 32, 2)], frames=4, height=16, width=16,
                       num_classes=4, reduction=4, stem_channels=16, stem_kernel=3, stem_stride=1,
                       stem_pool=False)
    net = build_network(spec, seed=0)
    out = net.forward(Tensor(np.random.default_rng(0).random((2, 4, 3, 16, 16)).astype(np.float32)))
    assert out.shape == (2, 4)


def test_resnet50_tea_graph_has_sixteen_tea_blocks():
    g = build_network(preset("resnet50-tea"), materialize=False)
    assert isinstance(g, SymbolicNetwork)
    assert len(g.blocks) == 16 and all(c.variant == BlockVariant.TEA for c in g.blocks)


def test_plain_graph_has_no_temporal_operators():
    assert build_network(preset("resnet50-2d"), materialize=False).temporal_layers() == []
    assert build_network(preset("toy-2d"), materialize=False).temporal_layers() == []
    assert build_network(preset("toy"), materialize=False).temporal_layers()


def test_shift_init_network_equals_shift_substituted(rng):
    for name, variant in (("toy", "TEA"), ("toy", "P21D_RESNET"), ("toy", "P21D_RES2NET"), ("toy", "MTA_ONLY")):
        net = build_network(preset(name).with_variant(variant, "SHIFT_INIT"), seed=5).eval()
        x = Tensor(rng.random((2, 8, 3, 16, 16)).astype(np.float32))
        a = net.forward(x).data
        b = net.set_shift_ops(True).forward(x).data
        assert np.abs(a - b).max() < 1e-6


def test_flavors_initialise_temporal_conv():
    spec = preset("toy").with_variant("P21D_RESNET", "SHIFT_INIT")
    b = build_network(spec, seed=0).blocks[0]
    w = b.temporal.weight.data[:, 0, :, 0, 0]
    assert set(map(tuple, w)) <= {(0, 0, 1), (1, 0, 0), (0, 1, 0)}
    cw = build_network(spec.with_variant("P21D_RESNET", "CW"), seed=0).blocks[0].temporal
    assert cw.groups == cw.in_channels and not np.isin(cw.weight.data, (0, 1)).all()
    full = build_network(spec.with_variant("P21D_RESNET", "CONV"), seed=0).blocks[0].temporal
    assert full.groups == 1


def test_duplicate_frames_into_plain_net():
    net = build_network(preset("toy-2d"), seed=1).eval()
    frame = np.random.default_rng(1).random((1, 1, 3, 16, 16)).astype(np.float32)
    clip = Tensor(np.repeat(frame, 8, axis=1))
    per_frame = net.frame_logits(clip).data[0]
    assert np.abs(per_frame - per_frame[0]).max() < 1e-6
    np.testing.assert_allclose(predict_video(net, clip), per_frame[0], atol=1e-6)


@pytest.mark.parametrize("seed", range(3))
def test_frame_reversal(seed):
    rng = np.random.default_rng(seed)
    clip = rng.random((1, 8, 3, 16, 16)).astype(np.float32)
    rev = clip[:, ::-1].copy()
    plain = build_network(preset("toy-2d"), seed=seed)
    tea = build_network(preset("toy"), seed=seed)
    assert np.abs(predict_video(plain, Tensor(clip)) - predict_video(plain, Tensor(rev))).max() < 1e-5
    assert np.abs(predict_video(tea, Tensor(clip)) - predict_video(tea, Tensor(rev))).max() > 1e-4


def test_zero_classifier_gives_uniform_scores():
    net = build_network(preset("toy"), seed=0)
    net.fc.weight.data[:] = 0
    s = predict_video(net, Tensor(np.random.default_rng(0).random((1, 8, 3, 16, 16)).astype(np.float32)))
    assert np.all(s == s[0])


def test_predict_video_shape_errors():
    net = build_network(preset("toy"), seed=0)
    with pytest.raises(ValueError):
        predict_video(net, Tensor(np.zeros((2, 8, 3, 16, 16))))
    with pytest.raises(ValueError):
        predict_video(net, Tensor(np.zeros((1, 8, 3, 12, 12))))


def test_predict_video_restores_training_mode():
    net = build_network(preset("toy"), seed=0).train()
    predict_video(net, Tensor(np.zeros((1, 8, 3, 16, 16), dtype=np.float32)))
    assert net.training


def test_stage_mask_uses_fallback():
    spec = preset("toy")
    spec.stages[1].tea = False
    cfgs = spec.block_configs()
    assert cfgs[0].variant == BlockVariant.TEA and cfgs[1].variant == BlockVariant.PLAIN_2D
    spec.fallback_variant = "P21D_RESNET"
    assert spec.block_configs()[1].variant == BlockVariant.P21D_RESNET


@pytest.mark.parametrize("mutate,msg", [
    (lambda s: setattr(s.stages[0], "out_channels", 30), "4 x bottleneck"),
    (lambda s: setattr(s, "reduction", 3), "reduction"),
    (lambda s: setattr(s.stages[0], "width", 6), "divisible by 4"),
    (lambda s: setattr(s, "height", 0), "height"),
    (lambda s: setattr(s, "stages", []), "at least one stage"),
])
def test_invalid_specs(mutate, msg):
    spec = preset("toy")
    mutate(spec)
    with pytest.raises(ValueError, match=msg):
        validate_spec(spec)


def test_spec_json_round_trip_and_digest():
    spec = preset("resnet50-tea")
    back = NetworkSpec.from_dict(spec.to_dict())
    assert back == spec and back.digest() == spec.digest()
    assert preset("resnet50-2d").digest() != spec.digest()
    with pytest.raises(ValueError):
        NetworkSpec.from_dict({**spec.to_dict(), "bogus": 1})


def test_dropout_only_in_training():
    net = build_network(preset("toy"), seed=0)
    x = Tensor(np.random.default_rng(0).random((2, 8, 3, 16, 16)).astype(np.float32))
    net.eval()
    assert np.array_equal(net.forward(x).data, net.forward(x).data)
    net.train()
    a = ops.mean_axis(net.frame_logits(x), 1).data
    b = ops.mean_axis(net.frame_logits(x), 1).data
    assert not np.array_equal(a, b)
