import numpy as np
import pytest

from oracles import resnet50_params_by_hand
from teanet.analyzer import (
    block_rf,
    count_flops,
    count_params,
    layer_cost,
    probe_network_rf,
    temporal_rf,
    analysis_report,
)
from teanet.graph import LayerNode, symbolic_graph
from teanet.net import BlockConfig, BlockVariant, NetworkSpec, StageSpec, build_network, preset


def _single_conv(cin, cout, k, h=8, w=8, groups=1):
    return LayerNode("c", "conv2d", (1, cin, h, w), (1, cout, h, w),
                     {"in_channels": cin, "out_channels": cout, "kernel": (1, k, k), "groups": groups,
                      "bias": False, "stride": 1})


def test_one_by_one_conv_on_one_pixel_is_one_mac():
    c = layer_cost(_single_conv(1, 1, 1, 1, 1))
    assert (c.macs, c.params) == (1, 1)


def test_three_by_three_conv_per_output_pixel():
    c = layer_cost(_single_conv(64, 64, 3, 1, 1))
    assert c.macs == 36864 == c.params


def test_depthwise_conv_cost():
    c = layer_cost(_single_conv(32, 32, 3, 4, 4, groups=32))
    assert c.macs == 32 * 16 * 9 and c.params == 32 * 9


def test_unknown_kind_is_rejected():
    with pytest.raises(ValueError, match="no cost rule"):
        layer_cost(LayerNode("x", "mystery", (1,), (1,)))


def test_resnet50_parameters_match_hand_count():
    got = count_params(preset("resnet50-2d")).totals["params"]
    want = resnet50_params_by_hand()
    assert got == want
    assert abs(got - 25.56e6) / 25.56e6 < 0.02


def test_resnet50_flops_in_known_range():
    macs = count_flops(preset("resnet50-2d")).totals["macs"]
    per_frame = macs / 8
    assert abs(per_frame - 4.09e9) / 4.09e9 < 0.02


def test_tea_costs_a_few_percent_more_than_plain():
    plain = count_flops(preset("resnet50-2d")).totals["macs"]
    tea = count_flops(preset("resnet50-tea")).totals["macs"]
    assert 1.0 < tea / plain < 1.10


def test_totals_are_layer_sums():
    r = count_flops(preset("toy"))
    for key in ("macs", "params", "aux_ops"):
        assert r.totals[key] == sum(getattr(l, key) for l in r.layers)


@pytest.mark.parametrize("name", ["toy", "toy-2d"])
def test_symbolic_params_match_materialized(name):
    spec = preset(name)
    assert count_params(spec).totals["params"] == build_network(spec, seed=0).num_parameters()


@pytest.mark.parametrize("variant", ["TEA", "ME_ONLY", "MTA_ONLY", "P21D_RESNET", "P21D_RES2NET", "P21D_SENET",
                                     "ME_NO_RESIDUAL", "PLAIN_2D"])
def test_symbolic_params_match_materialized_per_variant(variant):
    spec = preset("toy").with_variant(variant, "CW")
    assert count_params(spec).totals["params"] == build_network(spec, seed=0).num_parameters()


def test_flops_grow_by_a_constant_per_frame():
    # affine rather than linear: the motion transform runs on T - 1 frames
    spec = preset("toy")
    m = [count_flops(spec, frames=t).totals["macs"] for t in (2, 3, 4, 8)]
    step = m[1] - m[0]
    assert m[2] - m[1] == step and m[3] - m[2] == 4 * step
    assert count_flops(preset("toy-2d"), frames=8).totals["macs"] == 2 * count_flops(preset("toy-2d"), frames=4).totals["macs"]
    assert count_flops(spec, frames=4).totals["params"] == count_flops(spec, frames=8).totals["params"]


def test_input_override_is_recorded():
    r = count_flops(preset("toy"), frames=4, height=32)
    assert r.input == {"T": 4, "H": 32, "W": 32}


def _cfg(variant):
    return BlockConfig("b", 0, 64, 16, 64, 1, BlockVariant[variant])


@pytest.mark.parametrize("variant,back,fwd,agg", [
    ("TEA", 4, 3, 3),
    ("MTA_ONLY", 3, 3, 3),
    ("ME_ONLY", 2, 1, 1),
    ("ME_NO_RESIDUAL", 2, 1, 1),
    ("P21D_SENET", 1, 1, 1),
    ("P21D_RESNET", 1, 1, 1),
    ("P21D_RES2NET", 1, 1, 1),
    ("PLAIN_2D", 0, 0, 0),
])
def test_block_reach_table(variant, back, fwd, agg):
    r = block_rf(_cfg(variant))
    assert (r.back, r.forward, r.aggregation_radius) == (back, fwd, agg)
    assert r.radius == max(back, fwd)


def test_mta_fragment_radii_recorded():
    assert block_rf(_cfg("TEA")).fragment_radii == [0, 1, 2, 3]


def test_resnet50_cumulative_reach():
    r = temporal_rf(preset("resnet50-tea"))
    assert len(r.per_block) == 16
    assert r.cumulative_aggregation == 48
    assert r.cumulative == 64 and (r.back, r.forward) == (64, 48)
    assert [s["aggregation_radius"] for s in r.per_stage] == [9, 12, 18, 9]


def test_plain_network_has_no_reach():
    r = temporal_rf(preset("resnet50-2d"))
    assert r.cumulative == 0 and r.cumulative_aggregation == 0


def test_two_block_aggregation_stage():
    spec = NetworkSpec([StageSpec(2, 4, 16, 1)], frames=16, height=4, width=4, num_classes=2,
                       reduction=4, stem_channels=16, stem_kernel=3, stem_stride=1, stem_pool=False,
                       variant="MTA_ONLY")
    assert temporal_rf(spec).per_stage[0]["radius"] == 6


@pytest.mark.parametrize("variant", ["TEA", "MTA_ONLY", "ME_ONLY", "P21D_RESNET"])
def test_analytic_reach_matches_probe(variant):
    spec = preset("toy").with_variant(variant, "CW")
    r = temporal_rf(spec)
    assert probe_network_rf(spec, seed=3) == (r.back, r.forward)


def test_graph_records_block_membership():
    g = symbolic_graph(preset("toy"))
    names = [c.name for c in g.blocks]
    assert all(g.block_layers(n) for n in names)
    kinds = {n.kind for n in g.block_layers(names[0])}
    assert {"motion_diff", "temporal_conv", "conv2d"} <= kinds


def test_report_is_deterministic_for_equal_specs():
    a = analysis_report(preset("toy"), timestamp="t")
    b = analysis_report(NetworkSpec.from_dict(preset("toy").to_dict()), timestamp="t")
    assert a == b
    assert a["convention"] == "1 MAC = 1 FLOP"
    assert np.isclose(a["totals"]["macs"], count_flops(preset("toy")).totals["macs"])


def test_probe_is_not_fooled_by_dead_units():
    # at this seed a channel on the longest backward path is off for every
    # input under the default batch-norm statistics
    spec = preset("toy").with_variant("TEA", "CW")
    assert probe_network_rf(spec, seed=5) == (8, 6)
    assert probe_network_rf(spec, seed=5, trials=1) == (8, 6)


def test_probe_rejects_zero_trials():
    with pytest.raises(ValueError):
        probe_network_rf(preset("toy"), trials=0)
