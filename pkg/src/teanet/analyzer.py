"""Shape-driven cost and temporal receptive-field analysis.

Everything here works on :class:`~teanet.net.NetworkSpec` objects through the
weightless graph, so ResNet-50 scale specs are analyzed without allocating a
single weight. The headline figure counts multiply-accumulates of convolutions
and linear layers (one MAC is one FLOP); batch norm, activations, pooling and
other elementwise work is tallied separately as ``aux_ops``.
"""
from __future__ import annotations

import datetime as _dt
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .graph import LayerNode, SymbolicNetwork, symbolic_graph
from .net import (
    MTA_FAMILY,
    P21D_FAMILY,
    BlockConfig,
    BlockVariant,
    NetworkSpec,
    build_network,
)

CONVENTION = "1 MAC = 1 FLOP"


@dataclass
class LayerCost:
    name: str
    kind: str
    out_shape: list
    macs: int
    params: int
    aux_ops: int


@dataclass
class CostReport:
    convention: str
    input: dict
    layers: list
    totals: dict

    def to_dict(self) -> dict:
        return {"convention": self.convention, "input": dict(self.input),
                "layers": [asdict(l) for l in self.layers], "totals": dict(self.totals)}


def _numel(shape) -> int:
    return int(math.prod(shape))


def layer_cost(node: LayerNode) -> LayerCost:
    """MACs, parameters and auxiliary elementwise ops of one node."""
    k, a = node.kind, node.attrs
    out = _numel(node.out_shape)
    macs = params = aux = 0
    if k in ("conv2d", "temporal_conv"):
        cin_g = a["in_channels"] // a["groups"]
        taps = math.prod(a["kernel"])
        macs = out * cin_g * taps
        params = a["out_channels"] * cin_g * taps
        if a["bias"]:
            params += a["out_channels"]
            aux = out
    elif k == "linear":
        rows = node.in_shape[0]
        macs = rows * a["in_features"] * a["out_features"]
        params = a["in_features"] * a["out_features"] + a["out_features"]
        aux = rows * a["out_features"]
    elif k == "batch_norm":
        # affine parameters only; running statistics are buffers
        params = 2 * a["channels"]
        aux = 2 * out
    elif k in ("relu", "sigmoid", "add", "motion_diff", "channel_mul"):
        aux = out
    elif k == "affine":
        aux = 2 * out
    elif k in ("avg_pool", "temporal_mean"):
        aux = _numel(node.in_shape)
    elif k == "max_pool":
        aux = out * a["kernel"] ** 2
    elif k in ("temporal_shift", "subsample", "concat"):
        pass
    else:
        raise ValueError(f"no cost rule for node kind {k!r}")
    return LayerCost(node.name, k, list(node.out_shape), int(macs), int(params), int(aux))


def _with_input(spec: NetworkSpec, frames, height, width) -> NetworkSpec:
    if frames is None and height is None and width is None:
        return spec
    d = spec.to_dict()
    if frames is not None:
        d["frames"] = int(frames)
    if height is not None:
        d["height"] = int(height)
    if width is not None:
        d["width"] = int(width if width is not None else height)
    return NetworkSpec.from_dict(d)


def _report(graph: SymbolicNetwork) -> CostReport:
    spec = graph.spec
    layers = [layer_cost(n) for n in graph.layers]
    totals = {key: int(sum(getattr(l, key) for l in layers)) for key in ("macs", "params", "aux_ops")}
    return CostReport(CONVENTION, {"T": spec.frames, "H": spec.height, "W": spec.width}, layers, totals)


def count_flops(spec: NetworkSpec, frames: Optional[int] = None, height: Optional[int] = None,
                width: Optional[int] = None) -> CostReport:
    """Per-layer and total cost of one clip. ``frames``/``height``/``width``
    override the spec's input descriptor (``width`` defaults to ``height``)."""
    if height is not None and width is None:
        width = height
    return _report(symbolic_graph(_with_input(spec, frames, height, width)))


def count_params(spec: NetworkSpec) -> CostReport:
    """Same report as :func:`count_flops`; parameter counts do not depend on the input size."""
    return count_flops(spec)


def mta_params(channels: int, activations: bool = True) -> int:
    """Parameters of one aggregation module: three channel-wise kernel-3
    temporal convs and three 3x3 sub-convs on ``channels / 4`` channels."""
    if channels < 4 or channels % 4:
        raise ValueError(f"channels must be a positive multiple of 4, got {channels}")
    w = channels // 4
    n = 3 * (9 * w * w + 3 * w)
    return n + (3 * 2 * w if activations else 0)


def conv3x3_params(channels: int) -> int:
    return 9 * channels * channels


# ---------------------------------------------------------------- receptive field

@dataclass
class BlockRF:
    """Temporal reach of one block.

    ``back`` is how many frames earlier an input change can show up in the
    output, ``forward`` how many frames later; ``radius`` is the larger of the
    two. ``aggregation_radius`` counts the temporal convolutions on the longest
    path only (motion excitation's one-frame lookahead excluded).
    """

    name: str
    variant: str
    back: int
    forward: int
    radius: int
    aggregation_radius: int
    fragment_radii: Optional[list] = None


@dataclass
class RFReport:
    per_block: list
    per_stage: list
    cumulative: int
    cumulative_aggregation: int
    back: int
    forward: int

    def to_dict(self) -> dict:
        return {"per_block": [asdict(b) for b in self.per_block], "per_stage": list(self.per_stage),
                "cumulative": self.cumulative, "cumulative_aggregation": self.cumulative_aggregation,
                "back": self.back, "forward": self.forward}


MTA_FRAGMENT_RADII = (0, 1, 2, 3)


def block_rf(cfg: BlockConfig) -> BlockRF:
    v = cfg.variant
    agg = 0
    frags = None
    if v in P21D_FAMILY or v == BlockVariant.P21D_RES2NET:
        agg = 1
    if v in MTA_FAMILY:
        frags = list(MTA_FRAGMENT_RADII)
        agg = max(frags)
    # motion features at t read frame t+1, so a change at t0 reaches t0-1
    lookahead = 1 if v in (BlockVariant.TEA, BlockVariant.ME_ONLY, BlockVariant.ME_NO_RESIDUAL) else 0
    back, fwd = agg + lookahead, agg
    return BlockRF(cfg.name, v.value, back, fwd, max(back, fwd), agg, frags)


def temporal_rf(spec: NetworkSpec) -> RFReport:
    """Analytic temporal reach per block, per stage and for the whole network.

    Every block keeps the frame count, so reaches add along the depth.
    """
    blocks = [block_rf(c) for c in spec.block_configs()]
    stages = []
    for si in range(len(spec.stages)):
        mine = [b for b, c in zip(blocks, spec.block_configs()) if c.stage == si]
        stages.append({"stage": si + 1, "radius": max(sum(b.back for b in mine), sum(b.forward for b in mine)),
                       "aggregation_radius": sum(b.aggregation_radius for b in mine)})
    back = sum(b.back for b in blocks)
    fwd = sum(b.forward for b in blocks)
    return RFReport(blocks, stages, max(back, fwd), sum(b.aggregation_radius for b in blocks), back, fwd)


def probe_network_rf(spec: NetworkSpec, seed: int = 0, frames: Optional[int] = None,
                     threshold: float = 1e-9, trials: int = 4) -> tuple:
    """Empirical ``(back, forward)`` reach of a materialized network.

    A random float64 clip is perturbed in one middle frame; the per-frame
    logits that move reveal the reach. At the edge of the reach a single path
    carries the change and a ReLU that is off along it hides it, so:

    * batch-norm running statistics are first calibrated on random clips.
      With the default (0, 1) statistics a channel fed only non-negative
      inputs through negative weights stays off for every input;
    * the changed frames are pooled over ``trials`` independent clips.

    ``frames`` defaults to enough to hold the analytic reach on both sides.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rf = temporal_rf(spec)
    t = frames if frames is not None else 2 * max(rf.back, rf.forward) + 3
    net = build_network(spec, seed=seed).astype(np.float64)
    rng = np.random.default_rng(seed + 1)
    from .core.autograd import Tensor
    from .core.nn import BatchNorm

    norms = [m for m in net.modules() if isinstance(m, BatchNorm)]
    saved = [m.momentum for m in norms]
    for m in norms:
        m.momentum = 1.0
    net.train()
    net.frame_logits(Tensor(rng.standard_normal((4, t, spec.in_channels, spec.height, spec.width))))
    for m, mom in zip(norms, saved):
        m.momentum = mom
    net.eval()

    t0 = t // 2
    moved = np.zeros(t, dtype=bool)
    for _ in range(trials):
        base = rng.standard_normal((1, t, spec.in_channels, spec.height, spec.width))
        bumped = base.copy()
        bumped[0, t0] += rng.standard_normal(bumped[0, t0].shape) + 1.0
        d = np.abs(net.frame_logits(Tensor(bumped)).data - net.frame_logits(Tensor(base)).data)
        moved |= d[0].max(axis=1) > threshold
    changed = np.nonzero(moved)[0]
    if changed.size == 0:
        return 0, 0
    return int(t0 - changed.min()), int(changed.max() - t0)


def analysis_report(spec: NetworkSpec, frames: Optional[int] = None, size: Optional[int] = None,
                    timestamp: Optional[str] = None) -> dict:
    """Cost and receptive-field report as one JSON-ready dict."""
    cost = count_flops(spec, frames=frames, height=size, width=size)
    rf = temporal_rf(spec)
    d = cost.to_dict()
    d["spec"] = spec.name
    d["temporal_rf"] = rf.to_dict()
    d["timestamp"] = timestamp or _dt.datetime.now(_dt.timezone.utc).isoformat()
    return d
