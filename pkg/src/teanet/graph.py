"""Weightless layer graphs built from a :class:`~teanet.net.NetworkSpec`.

Shapes are per clip, ``(T, C, H, W)``. Nodes carry only geometry; the analyzer
turns geometry into costs.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .net import (
    MTA_FAMILY,
    P21D_FAMILY,
    BlockConfig,
    BlockVariant,
    NetworkSpec,
    TemporalFlavor,
)

TEMPORAL_KINDS = {"temporal_conv", "temporal_shift", "motion_diff", "temporal_mean"}
# temporal_mean is the consensus over frames after the classifier; it is not a
# per-block temporal operator
BLOCK_TEMPORAL_KINDS = TEMPORAL_KINDS - {"temporal_mean"}


@dataclass
class LayerNode:
    name: str
    kind: str
    in_shape: tuple
    out_shape: tuple
    attrs: dict = field(default_factory=dict)
    block: str | None = None


@dataclass
class SymbolicNetwork:
    spec: NetworkSpec
    layers: list
    blocks: list

    def temporal_layers(self) -> list:
        return [n for n in self.layers if n.kind in BLOCK_TEMPORAL_KINDS]

    def block_layers(self, name: str) -> list:
        return [n for n in self.layers if n.block == name]


def _conv_out(size, k, s, p):
    return (size + 2 * p - k) // s + 1


class _Builder:
    def __init__(self):
        self.layers = []
        self.block = None

    def add(self, name, kind, in_shape, out_shape=None, **attrs):
        out_shape = in_shape if out_shape is None else out_shape
        self.layers.append(LayerNode(name, kind, tuple(in_shape), tuple(out_shape), attrs, self.block))
        return tuple(out_shape)

    def conv2d(self, name, shape, out_ch, k, stride=1, groups=1, bias=False):
        t, c, h, w = shape
        p = (k - 1) // 2
        out = (t, out_ch, _conv_out(h, k, stride, p), _conv_out(w, k, stride, p))
        return self.add(name, "conv2d", shape, out, in_channels=c, out_channels=out_ch,
                        kernel=(1, k, k), groups=groups, bias=bias, stride=stride)

    def temporal_conv(self, name, shape, channelwise=True):
        c = shape[1]
        return self.add(name, "temporal_conv", shape, shape, in_channels=c, out_channels=c,
                        kernel=(3, 1, 1), groups=c if channelwise else 1, bias=False,
                        reach=(1, 1))

    def bn(self, name, shape):
        return self.add(name, "batch_norm", shape, channels=shape[1])

    def relu(self, name, shape):
        return self.add(name, "relu", shape)


def _motion_excitation(b: _Builder, pre: str, shape, reduction: int, residual: bool, me_bn: bool):
    t, c, h, w = shape
    red = c // reduction
    xr = b.conv2d(f"{pre}.conv_red", shape, red, 1, bias=True)
    if me_bn:
        b.bn(f"{pre}.bn_red", xr)
    if t > 1:
        nxt = (t - 1, red, h, w)
        b.conv2d(f"{pre}.conv_trans", nxt, red, 3, groups=red)
        # output t reads frame t+1: an input change at t0 reaches output t0-1
        b.add(f"{pre}.motion_diff", "motion_diff", nxt, reach=(1, 0))
    pooled = b.add(f"{pre}.pool", "avg_pool", xr, (t, red, 1, 1))
    a = b.conv2d(f"{pre}.conv_exp", pooled, c, 1, bias=True)
    if me_bn:
        b.bn(f"{pre}.bn_exp", a)
    b.add(f"{pre}.sigmoid", "sigmoid", a)
    b.add(f"{pre}.affine", "affine", a)
    b.add(f"{pre}.excite", "channel_mul", shape)
    if residual:
        b.add(f"{pre}.residual", "add", shape)
    return shape


def _squeeze_excitation(b: _Builder, pre: str, shape, reduction: int):
    t, c, h, w = shape
    pooled = b.add(f"{pre}.pool", "avg_pool", shape, (t, c, 1, 1))
    s = b.conv2d(f"{pre}.fc1", pooled, c // reduction, 1, bias=True)
    b.relu(f"{pre}.relu", s)
    g = b.conv2d(f"{pre}.fc2", s, c, 1, bias=True)
    b.add(f"{pre}.sigmoid", "sigmoid", g)
    b.add(f"{pre}.excite", "channel_mul", shape)
    return shape


def _cascade(b: _Builder, pre: str, shape, stride: int, temporal: bool):
    """Four-fragment hierarchy; ``temporal`` adds a channel-wise temporal conv
    in front of each spatial sub-conv (MTA), otherwise spatial only (Res2Net)."""
    t, c, h, w = shape
    q = c // 4
    frag_in = (t, q, h, w)
    ho, wo = _conv_out(h, 3, stride, 1), _conv_out(w, 3, stride, 1)
    frag_out = (t, q, ho, wo)
    if stride > 1:
        b.add(f"{pre}.frag1.subsample", "subsample", frag_in, frag_out)
    for i in range(2, 5):
        fp = f"{pre}.frag{i}"
        if i == 2:
            x = frag_in
        else:
            if stride > 1:
                b.add(f"{fp}.subsample", "subsample", frag_in, frag_out)
            x = b.add(f"{fp}.add", "add", frag_out)
        if temporal:
            b.temporal_conv(f"{fp}.conv_temp", x)
        y = b.conv2d(f"{fp}.conv_spa", x, q, 3, stride=stride if i == 2 else 1)
        b.bn(f"{fp}.bn", y)
        b.relu(f"{fp}.relu", y)
    return b.add(f"{pre}.concat", "concat", frag_out, (t, c, ho, wo))


def block_graph(b: _Builder, cfg: BlockConfig, shape) -> tuple:
    v = cfg.variant
    pre = cfg.name
    b.block = pre
    t, c, h, w = shape
    x = b.conv2d(f"{pre}.conv1", shape, cfg.bottleneck, 1)
    b.bn(f"{pre}.bn1", x)
    b.relu(f"{pre}.relu1", x)
    if v in (BlockVariant.TEA, BlockVariant.ME_ONLY, BlockVariant.ME_NO_RESIDUAL):
        _motion_excitation(b, f"{pre}.me", x, cfg.reduction, v != BlockVariant.ME_NO_RESIDUAL, cfg.me_bn)
    elif v == BlockVariant.P21D_SENET:
        _squeeze_excitation(b, f"{pre}.se", x, cfg.reduction)
    if v in P21D_FAMILY:
        b.temporal_conv(f"{pre}.temporal", x, channelwise=cfg.flavor != TemporalFlavor.CONV)
    if v in MTA_FAMILY:
        x = _cascade(b, f"{pre}.mta", x, cfg.stride, temporal=True)
    elif v == BlockVariant.P21D_RES2NET:
        b.temporal_conv(f"{pre}.res2.conv_temp", x, channelwise=cfg.flavor != TemporalFlavor.CONV)
        x = _cascade(b, f"{pre}.res2", x, cfg.stride, temporal=False)
    else:
        x = b.conv2d(f"{pre}.conv2", x, cfg.bottleneck, 3, stride=cfg.stride)
        b.bn(f"{pre}.bn2", x)
        b.relu(f"{pre}.relu2", x)
    y = b.conv2d(f"{pre}.conv3", x, cfg.out_channels, 1)
    b.bn(f"{pre}.bn3", y)
    if cfg.projection:
        sc = b.conv2d(f"{pre}.proj", shape, cfg.out_channels, 1, stride=cfg.stride)
        b.bn(f"{pre}.bn_proj", sc)
    b.add(f"{pre}.add", "add", y)
    b.relu(f"{pre}.relu", y)
    b.block = None
    return y


def symbolic_graph(spec: NetworkSpec) -> SymbolicNetwork:
    """Flat layer list for ``spec`` without allocating any weights."""
    cfgs = spec.block_configs()
    b = _Builder()
    shape = (spec.frames, spec.in_channels, spec.height, spec.width)
    x = b.conv2d("stem.conv", shape, spec.stem_channels, spec.stem_kernel, stride=spec.stem_stride)
    b.bn("stem.bn", x)
    b.relu("stem.relu", x)
    if spec.stem_pool:
        t, c, h, w = x
        x = b.add("stem.pool", "max_pool", x, (t, c, _conv_out(h, 3, 2, 1), _conv_out(w, 3, 2, 1)), kernel=3)
    for cfg in cfgs:
        x = block_graph(b, cfg, x)
    t, c, h, w = x
    pooled = b.add("head.pool", "avg_pool", x, (t, c, 1, 1))
    logits = b.add("head.fc", "linear", pooled, (t, spec.num_classes, 1, 1),
                   in_features=c, out_features=spec.num_classes)
    b.add("head.consensus", "temporal_mean", logits, (1, spec.num_classes, 1, 1))
    return SymbolicNetwork(spec, b.layers, cfgs)
