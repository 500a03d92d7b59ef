"""Network specs, residual block variants and whole-network assembly.

A :class:`NetworkSpec` is a weightless description. :func:`build_network`
either turns it into a symbolic layer graph (for the analyzer) or allocates a
trainable :class:`Network`.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from typing import Optional

import numpy as np

from .core import ops
from .core.autograd import Tensor
from .core.nn import BatchNorm, ConvKernel, Linear, Module, spatial_kernel, temporal_kernel
from .me import MEModule, SEModule, me_forward, me_forward_no_residual, se_forward
from .mta import MTAModule, Res2NetSpatial, mta_forward, parallel_res2net_forward
from .shift import default_fold, shift_initialize


class BlockVariant(str, Enum):
    TEA = "TEA"
    P21D_RESNET = "P21D_RESNET"
    P21D_RES2NET = "P21D_RES2NET"
    MTA_ONLY = "MTA_ONLY"
    ME_ONLY = "ME_ONLY"
    P21D_SENET = "P21D_SENET"
    ME_NO_RESIDUAL = "ME_NO_RESIDUAL"
    PLAIN_2D = "PLAIN_2D"


class TemporalFlavor(str, Enum):
    CONV = "CONV"
    CW = "CW"
    SHIFT_INIT = "SHIFT_INIT"


# blocks whose residual branch carries a standalone temporal conv before the 3x3
P21D_FAMILY = {BlockVariant.P21D_RESNET, BlockVariant.ME_ONLY, BlockVariant.P21D_SENET,
               BlockVariant.ME_NO_RESIDUAL}
ME_FAMILY = {BlockVariant.TEA, BlockVariant.ME_ONLY, BlockVariant.ME_NO_RESIDUAL}
MTA_FAMILY = {BlockVariant.TEA, BlockVariant.MTA_ONLY}
FLAVORED = P21D_FAMILY | {BlockVariant.P21D_RES2NET}

EXPANSION = 4


@dataclass
class StageSpec:
    blocks: int
    bottleneck: int
    out_channels: int
    stride: int = 1
    tea: bool = True
    reduction: Optional[int] = None
    # residual-branch width when it differs from ``bottleneck`` (Res2Net-style widening)
    width: Optional[int] = None

    @property
    def branch_width(self) -> int:
        return self.bottleneck if self.width is None else self.width


@dataclass
class NetworkSpec:
    """Weightless network description.

    ``variant`` applies to stages with ``tea=True``; other stages use
    ``fallback_variant``. ``reduction`` is the motion-excitation ratio unless a
    stage overrides it.
    """

    stages: list
    frames: int = 8
    height: int = 224
    width: int = 224
    in_channels: int = 3
    num_classes: int = 174
    variant: str = "TEA"
    flavor: str = "SHIFT_INIT"
    fallback_variant: str = "PLAIN_2D"
    reduction: int = 16
    stem_channels: int = 64
    stem_kernel: int = 7
    stem_stride: int = 2
    stem_pool: bool = True
    dropout: float = 0.5
    me_bn: bool = False
    name: str = "custom"

    def __post_init__(self):
        self.stages = [s if isinstance(s, StageSpec) else StageSpec(**s) for s in self.stages]
        self.variant = BlockVariant(self.variant).value
        self.fallback_variant = BlockVariant(self.fallback_variant).value
        self.flavor = TemporalFlavor(self.flavor).value

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown spec fields: {sorted(unknown)}")
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def digest(self) -> bytes:
        return hashlib.sha256(self.to_json().encode()).digest()

    def with_variant(self, variant, flavor=None) -> "NetworkSpec":
        flavor = self.flavor if flavor is None else flavor
        return replace(self, variant=BlockVariant(variant).value, flavor=TemporalFlavor(flavor).value,
                       stages=[replace(s) for s in self.stages])

    def stage_variant(self, stage: StageSpec) -> BlockVariant:
        return BlockVariant(self.variant if stage.tea else self.fallback_variant)

    def stage_reduction(self, stage: StageSpec) -> int:
        return stage.reduction if stage.reduction is not None else self.reduction

    def block_configs(self) -> list["BlockConfig"]:
        """Flatten stages into per-block configs (validating the spec)."""
        validate_spec(self)
        cfgs = []
        c_in = self.stem_channels
        for si, stage in enumerate(self.stages):
            for bi in range(stage.blocks):
                cfgs.append(BlockConfig(
                    name=f"stage{si + 1}.block{bi + 1}", stage=si, in_channels=c_in,
                    bottleneck=stage.branch_width, out_channels=stage.out_channels,
                    stride=stage.stride if bi == 0 else 1, variant=self.stage_variant(stage),
                    flavor=TemporalFlavor(self.flavor), reduction=self.stage_reduction(stage),
                    me_bn=self.me_bn))
                c_in = stage.out_channels
        return cfgs


@dataclass
class BlockConfig:
    name: str
    stage: int
    in_channels: int
    bottleneck: int
    out_channels: int
    stride: int
    variant: BlockVariant
    flavor: TemporalFlavor = TemporalFlavor.SHIFT_INIT
    reduction: int = 16
    me_bn: bool = False

    @property
    def projection(self) -> bool:
        return self.in_channels != self.out_channels or self.stride != 1


def _out_size(size: int, k: int, s: int, p: int) -> int:
    return (size + 2 * p - k) // s + 1


def validate_spec(spec: NetworkSpec) -> None:
    """Raise ``ValueError`` describing the first violated invariant."""
    if not spec.stages:
        raise ValueError("spec needs at least one stage")
    for name in ("frames", "height", "width", "in_channels", "num_classes", "stem_channels",
                 "stem_kernel", "stem_stride", "reduction"):
        if getattr(spec, name) < 1:
            raise ValueError(f"{name} must be >= 1")
    if not 0.0 <= spec.dropout < 1.0:
        raise ValueError("dropout must lie in [0, 1)")
    h = _out_size(spec.height, spec.stem_kernel, spec.stem_stride, (spec.stem_kernel - 1) // 2)
    w = _out_size(spec.width, spec.stem_kernel, spec.stem_stride, (spec.stem_kernel - 1) // 2)
    if spec.stem_pool:
        h, w = _out_size(h, 3, 2, 1), _out_size(w, 3, 2, 1)
    if h < 1 or w < 1:
        raise ValueError("input too small for the stem")
    for si, stage in enumerate(spec.stages):
        where = f"stage {si + 1}"
        if stage.blocks < 1 or stage.bottleneck < 1 or stage.branch_width < 1 or stage.stride < 1:
            raise ValueError(f"{where}: blocks, bottleneck, width and stride must be >= 1")
        if stage.out_channels != EXPANSION * stage.bottleneck:
            raise ValueError(f"{where}: out_channels must be {EXPANSION} x bottleneck")
        variant = spec.stage_variant(stage)
        r = spec.stage_reduction(stage)
        width = stage.branch_width
        if variant in MTA_FAMILY or variant == BlockVariant.P21D_RES2NET:
            if width % 4:
                raise ValueError(f"{where}: branch width {width} not divisible by 4")
        if variant in ME_FAMILY or variant == BlockVariant.P21D_SENET:
            if r < 1 or width % r or width < r:
                raise ValueError(f"{where}: reduction {r} must divide branch width {width}")
        h = (h - 1) // stage.stride + 1
        w = (w - 1) // stage.stride + 1


# ---------------------------------------------------------------- blocks

def _temporal_init(flavor: TemporalFlavor) -> str:
    return {TemporalFlavor.CONV: "full", TemporalFlavor.CW: "random",
            TemporalFlavor.SHIFT_INIT: "shift"}[flavor]


class Block(Module):
    """Bottleneck residual block in one of the :class:`BlockVariant` forms.

    ``shift_ops`` substitutes the fixed part shift for every temporal conv.
    """

    shift_ops = False

    def __init__(self, cfg: BlockConfig, rng: Optional[np.random.Generator] = None):
        self.cfg = cfg
        v, b = cfg.variant, cfg.bottleneck
        self.conv1 = spatial_kernel(cfg.in_channels, b, 1, rng=rng)
        self.bn1 = BatchNorm(b)
        self.excite = None
        if v in ME_FAMILY:
            self.excite = MEModule(b, cfg.reduction, rng=rng, use_bn=cfg.me_bn)
        elif v == BlockVariant.P21D_SENET:
            self.excite = SEModule(b, cfg.reduction, rng=rng)
        self.temporal = None
        self.conv2 = self.bn2 = None
        self.mta = self.res2 = None
        if v in P21D_FAMILY:
            self.temporal = temporal_kernel(b, 3, channelwise=cfg.flavor != TemporalFlavor.CONV, rng=rng)
            if cfg.flavor == TemporalFlavor.SHIFT_INIT:
                shift_initialize(self.temporal)
        if v in MTA_FAMILY:
            self.mta = MTAModule(b, stride=cfg.stride, rng=rng)
        elif v == BlockVariant.P21D_RES2NET:
            self.res2 = Res2NetSpatial(b, stride=cfg.stride, rng=rng, temporal_init=_temporal_init(cfg.flavor))
        else:
            self.conv2 = spatial_kernel(b, b, 3, stride=cfg.stride, rng=rng)
            self.bn2 = BatchNorm(b)
        self.conv3 = spatial_kernel(b, cfg.out_channels, 1, rng=rng)
        self.bn3 = BatchNorm(cfg.out_channels)
        self.proj = self.bn_proj = None
        if cfg.projection:
            self.proj = spatial_kernel(cfg.in_channels, cfg.out_channels, 1, stride=cfg.stride, rng=rng)
            self.bn_proj = BatchNorm(cfg.out_channels)

    def set_shift_ops(self, on: bool) -> None:
        self.shift_ops = on
        for sub in (self.mta, self.res2):
            if sub is not None:
                sub.shift_ops = on

    def residual(self, x: Tensor) -> Tensor:
        v, train = self.cfg.variant, self.training
        h = ops.relu(ops.batch_norm2d(ops.conv2d(x, self.conv1), self.bn1, train))
        if v in (BlockVariant.TEA, BlockVariant.ME_ONLY):
            h = me_forward(self.excite, h)
        elif v == BlockVariant.ME_NO_RESIDUAL:
            h = me_forward_no_residual(self.excite, h)
        elif v == BlockVariant.P21D_SENET:
            h = se_forward(self.excite, h)
        if self.temporal is not None:
            if self.shift_ops:
                h = ops.temporal_shift(h, default_fold(h.shape[2]))
            else:
                h = ops.temporal_conv1d(h, self.temporal)
        if self.mta is not None:
            h = mta_forward(self.mta, h)
        elif self.res2 is not None:
            h = parallel_res2net_forward(self.res2, h)
        else:
            h = ops.relu(ops.batch_norm2d(ops.conv2d(h, self.conv2), self.bn2, train))
        return ops.batch_norm2d(ops.conv2d(h, self.conv3), self.bn3, train)

    def shortcut(self, x: Tensor) -> Tensor:
        if self.proj is None:
            return x
        return ops.batch_norm2d(ops.conv2d(x, self.proj), self.bn_proj, self.training)

    def forward(self, x: Tensor) -> Tensor:
        ops.check_video(x)
        if x.shape[2] != self.cfg.in_channels:
            raise ValueError(f"{self.cfg.name}: expected {self.cfg.in_channels} channels, got {x.shape[2]}")
        return ops.relu(ops.add(self.shortcut(x), self.residual(x)))


class TEABlock(Block):
    """Bottleneck with motion excitation after the first 1x1 conv and MTA in
    place of the 3x3 conv."""

    def __init__(self, in_channels: int, bottleneck: int, out_channels: Optional[int] = None,
                 stride: int = 1, reduction: int = 16, rng: Optional[np.random.Generator] = None):
        out_channels = EXPANSION * bottleneck if out_channels is None else out_channels
        if out_channels != EXPANSION * bottleneck:
            raise ValueError(f"output channels must be {EXPANSION} x bottleneck")
        super().__init__(BlockConfig("tea", 0, in_channels, bottleneck, out_channels, stride,
                                     BlockVariant.TEA, reduction=reduction), rng=rng)


def tea_block_forward(block: Block, x: Tensor) -> Tensor:
    return block.forward(x)


# ---------------------------------------------------------------- network

class Network(Module):
    """Stem, residual stages and a per-frame classifier averaged over time."""

    def __init__(self, spec: NetworkSpec, rng: Optional[np.random.Generator] = None):
        cfgs = spec.block_configs()
        self.spec = spec
        self.stem = spatial_kernel(spec.in_channels, spec.stem_channels, spec.stem_kernel,
                                   stride=spec.stem_stride, rng=rng)
        self.stem_bn = BatchNorm(spec.stem_channels)
        self.blocks = [Block(c, rng=rng) for c in cfgs]
        self.fc = Linear(spec.stages[-1].out_channels, spec.num_classes, rng=rng)
        self.dropout_rng = np.random.default_rng(0 if rng is None else int(rng.integers(2 ** 31)))

    def set_shift_ops(self, on: bool = True) -> "Network":
        for b in self.blocks:
            b.set_shift_ops(on)
        return self

    def features(self, x: Tensor) -> Tensor:
        """Activations after the last block, ``[N, T, C, h, w]``."""
        ops.check_video(x)
        s = self.spec
        if x.shape[1:] != (s.frames, s.in_channels, s.height, s.width) and x.shape[2:] != (
                s.in_channels, s.height, s.width):
            raise ValueError(f"clip shape {x.shape[1:]} does not match spec "
                             f"({s.frames}, {s.in_channels}, {s.height}, {s.width})")
        h = ops.relu(ops.batch_norm2d(ops.conv2d(x, self.stem), self.stem_bn, self.training))
        if s.stem_pool:
            h = ops.max_pool2d(h, 3, 2, 1)
        for b in self.blocks:
            h = b.forward(h)
        return h

    def frame_logits(self, x: Tensor) -> Tensor:
        """Per-frame class scores ``[N, T, K]``."""
        h = ops.global_avg_pool_spatial(self.features(x))
        n, t, c = h.shape[:3]
        h = ops.reshape(h, (n * t, c))
        h = ops.dropout(h, self.spec.dropout, self.dropout_rng, self.training)
        return ops.reshape(ops.linear(h, self.fc.weight, self.fc.bias), (n, t, -1))

    def forward(self, x: Tensor) -> Tensor:
        """Video-level scores: per-frame logits averaged over time, ``[N, K]``."""
        return ops.mean_axis(self.frame_logits(x), axis=1)


def predict_video(net: Network, clip: Tensor) -> np.ndarray:
    """Class scores for one clip ``[1, T, 3, H, W]`` in inference mode."""
    if clip.ndim != 5 or clip.shape[0] != 1:
        raise ValueError(f"expected a single clip [1, T, C, H, W], got {clip.shape}")
    was_training = net.training
    net.eval()
    try:
        return net.forward(clip).data[0]
    finally:
        net.train(was_training)


def build_network(spec: NetworkSpec, materialize: bool = True, seed: int = 0):
    """Allocate a :class:`Network` or, with ``materialize=False``, return the
    weightless :class:`~teanet.graph.SymbolicNetwork`."""
    if not materialize:
        from .graph import symbolic_graph
        return symbolic_graph(spec)
    return Network(spec, rng=np.random.default_rng(seed))


# ---------------------------------------------------------------- presets

def resnet50_stages(widths=(64, 128, 256, 512), out=(256, 512, 1024, 2048)) -> list:
    return [StageSpec(n, w, o, s) for n, w, o, s in zip((3, 4, 6, 3), widths, out, (1, 2, 2, 2))]


def preset(name: str, **overrides) -> NetworkSpec:
    """Named specs: ``resnet50-2d``, ``resnet50-tea`` (branch widths of Res2Net-50 26w x 4s),
    ``toy`` (two single-block stages on 16x16 inputs; a stride-2 stem keeps
    CPU training fast) and ``toy-2d``."""
    if name == "resnet50-2d":
        spec = NetworkSpec(resnet50_stages(), variant="PLAIN_2D", num_classes=1000, name=name)
    elif name == "resnet50-tea":
        stages = resnet50_stages()
        for s, w in zip(stages, (104, 208, 416, 832)):
            s.width = w
        # 104 is not a multiple of 16
        stages[0].reduction = 8
        spec = NetworkSpec(stages, variant="TEA", num_classes=1000, name=name)
    elif name in ("toy", "toy-2d"):
        spec = NetworkSpec([StageSpec(1, 8, 32, 1), StageSpec(1, 16, 64, 2)], frames=8, height=16,
                           width=16, num_classes=4, variant="TEA" if name == "toy" else "PLAIN_2D",
                           reduction=8, stem_channels=16, stem_kernel=3, stem_stride=2,
                           stem_pool=False, dropout=0.5, name=name)
    else:
        raise ValueError(f"unknown preset {name!r}")
    for k, v in overrides.items():
        setattr(spec, k, v)
    spec.__post_init__()
    return spec


PRESETS = ("resnet50-2d", "resnet50-tea", "toy", "toy-2d")
