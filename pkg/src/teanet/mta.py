"""Multiple temporal aggregation: a four-fragment hierarchical cascade of
(temporal, spatial) sub-convolutions, and the spatial-only Res2Net baseline."""
from __future__ import annotations

from typing import Optional

import numpy as np

from .core import ops
from .core.autograd import Tensor
from .core.nn import BatchNorm, Module, spatial_kernel, temporal_kernel
from .shift import default_fold, shift_initialize

FRAGMENTS = 4


def _check_channels(channels: int) -> int:
    if channels < FRAGMENTS or channels % FRAGMENTS:
        raise ValueError(f"channels must be a positive multiple of {FRAGMENTS}, got {channels}")
    return channels // FRAGMENTS


class MTAModule(Module):
    """Parameters of one aggregation module on ``channels`` channels.

    ``conv_temp[i]`` and ``conv_spa[i]`` serve fragment ``i + 2``; fragment 1
    has no parameters. With ``activations`` each spatial sub-conv is followed by
    batch norm and ReLU; without them the module is the bare linear cascade.
    ``temporal_init`` is ``"shift"`` (part-shift taps) or ``"random"``.
    """

    shift_ops = False

    def __init__(self, channels: int, stride: int = 1, rng: Optional[np.random.Generator] = None,
                 activations: bool = True, temporal_init: str = "shift"):
        width = _check_channels(channels)
        self.channels = channels
        self.width = width
        self.stride = stride
        self.activations = activations
        self.conv_temp = [temporal_kernel(width, 3, rng=rng) for _ in range(FRAGMENTS - 1)]
        if temporal_init == "shift":
            for k in self.conv_temp:
                shift_initialize(k)
        elif temporal_init != "random":
            raise ValueError(f"unknown temporal_init {temporal_init!r}")
        # only fragment 2 sees full-resolution input in a strided module
        self.conv_spa = [spatial_kernel(width, width, 3, stride=stride if i == 0 else 1, rng=rng)
                         for i in range(FRAGMENTS - 1)]
        self.bn = [BatchNorm(width) for _ in range(FRAGMENTS - 1)] if activations else []


def _temporal(m, kernel, x: Tensor) -> Tensor:
    # ``shift_ops`` swaps every temporal conv for the fixed part shift it was initialized as
    if getattr(m, "shift_ops", False):
        return ops.temporal_shift(x, default_fold(x.shape[2]))
    return ops.temporal_conv1d(x, kernel)


def mta_forward(m: MTAModule, x: Tensor) -> Tensor:
    """Fragment 1 passes through; fragment ``i >= 2`` gets
    ``spa(temp(X_i + out_{i-1}))`` (no addition for ``i == 2``); outputs are
    concatenated back along channels."""
    ops.check_video(x)
    if x.shape[2] != m.channels:
        raise ValueError(f"MTA expects {m.channels} channels, got {x.shape[2]}")
    parts = ops.split_channels(x, FRAGMENTS)
    outs = [ops.spatial_subsample(parts[0], m.stride)]
    prev = None
    for i in range(1, FRAGMENTS):
        if prev is None:
            inp = parts[i]
        else:
            inp = ops.add(ops.spatial_subsample(parts[i], m.stride), prev)
        y = ops.conv2d(_temporal(m, m.conv_temp[i - 1], inp), m.conv_spa[i - 1])
        if m.activations:
            y = ops.relu(ops.batch_norm2d(y, m.bn[i - 1], m.training))
        outs.append(y)
        prev = y
    return ops.concat(outs, axis=2)


class Res2NetSpatial(Module):
    """One full-width channel-wise temporal conv followed by a hierarchical
    cascade of spatial-only sub-convs (the (2+1)D Res2Net baseline).

    ``temporal_init="full"`` makes the temporal conv mix channels.
    """

    shift_ops = False

    def __init__(self, channels: int, stride: int = 1, rng: Optional[np.random.Generator] = None,
                 activations: bool = True, temporal_init: str = "shift"):
        width = _check_channels(channels)
        self.channels = channels
        self.width = width
        self.stride = stride
        self.activations = activations
        if temporal_init not in ("shift", "random", "full"):
            raise ValueError(f"unknown temporal_init {temporal_init!r}")
        self.conv_temp = temporal_kernel(channels, 3, channelwise=temporal_init != "full", rng=rng)
        if temporal_init == "shift":
            shift_initialize(self.conv_temp)
        self.conv_spa = [spatial_kernel(width, width, 3, stride=stride if i == 0 else 1, rng=rng)
                         for i in range(FRAGMENTS - 1)]
        self.bn = [BatchNorm(width) for _ in range(FRAGMENTS - 1)] if activations else []


def parallel_res2net_forward(m: Res2NetSpatial, x: Tensor) -> Tensor:
    ops.check_video(x)
    if x.shape[2] != m.channels:
        raise ValueError(f"Res2Net block expects {m.channels} channels, got {x.shape[2]}")
    xt = _temporal(m, m.conv_temp, x)
    parts = ops.split_channels(xt, FRAGMENTS)
    outs = [ops.spatial_subsample(parts[0], m.stride)]
    prev = None
    for i in range(1, FRAGMENTS):
        inp = parts[i] if prev is None else ops.add(ops.spatial_subsample(parts[i], m.stride), prev)
        y = ops.conv2d(inp, m.conv_spa[i - 1])
        if m.activations:
            y = ops.relu(ops.batch_norm2d(y, m.bn[i - 1], m.training))
        outs.append(y)
        prev = y
    return ops.concat(outs, axis=2)


def _impulse_response(fn, channels: int, frames: int, size: int, rng: np.random.Generator,
                      t0: int) -> np.ndarray:
    """|f(x + impulse at t0) - f(x)| for a random float64 baseline ``x``."""
    base = rng.standard_normal((1, frames, channels, size, size))
    bumped = base.copy()
    width = channels // FRAGMENTS
    # one channel per fragment, whole frame
    for f in range(FRAGMENTS):
        bumped[0, t0, f * width] += rng.standard_normal((size, size)) + 3.0
    y0 = fn(Tensor(base)).data
    y1 = fn(Tensor(bumped)).data
    return np.abs(y1 - y0)


def fragment_radii(diff: np.ndarray, t0: int, threshold: float = 1e-9) -> tuple:
    """Per output fragment, the largest ``|t - t0|`` whose frame changed."""
    width = diff.shape[2] // FRAGMENTS
    radii = []
    for f in range(FRAGMENTS):
        changed = diff[0, :, f * width:(f + 1) * width].reshape(diff.shape[1], -1).max(axis=1) > threshold
        ts = np.nonzero(changed)[0]
        radii.append(int(np.abs(ts - t0).max()) if ts.size else 0)
    return tuple(radii)


def _probe(m, forward, frames: int, seed: int, size: int) -> tuple:
    if frames < 9:
        raise ValueError(f"probe needs T >= 9 to contain radius-3 support, got {frames}")
    m64 = m.astype(np.float64).eval()
    t0 = frames // 2
    diff = _impulse_response(lambda t: forward(m64, t), m.channels, frames, size,
                             np.random.default_rng(seed), t0)
    return fragment_radii(diff, t0)


def mta_probe_temporal_rf(m: MTAModule, frames: int = 9, seed: int = 0, size: int = 5) -> tuple:
    """Empirical temporal radius of each output fragment from a single-frame impulse."""
    return _probe(m, mta_forward, frames, seed, size)


def res2net_probe_temporal_rf(m: Res2NetSpatial, frames: int = 9, seed: int = 0, size: int = 5) -> tuple:
    return _probe(m, parallel_res2net_forward, frames, seed, size)
