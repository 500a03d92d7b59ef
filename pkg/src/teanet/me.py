"""Motion excitation and the squeeze-excitation baseline.

Motion excitation turns feature-level differences between adjacent frames into
channel attention in ``(-1, 1)`` and applies it with a residual connection.
"""
from __future__ import annotations

from typing import Optional

import numpy as np

from .core import ops
from .core.autograd import Tensor
from .core.nn import BatchNorm, ConvKernel, Module, spatial_kernel


def identity_kernel(kernel: ConvKernel) -> ConvKernel:
    """Set a spatial channel-wise kernel to the centre-tap identity."""
    w = np.zeros(kernel.weight.shape)
    w[:, :, 0, kernel.kernel_h // 2, kernel.kernel_w // 2] = 1.0
    return kernel.set_weights(w)


class MEModule(Module):
    """Motion excitation over ``channels`` with reduction ratio ``reduction``.

    ``conv_trans`` starts as the identity, so a fresh module computes plain
    frame differences of the reduced features.
    """

    def __init__(self, channels: int, reduction: int = 16, rng: Optional[np.random.Generator] = None,
                 use_bn: bool = False):
        if reduction < 1 or channels < reduction or channels % reduction:
            raise ValueError(f"reduction {reduction} must divide channels {channels}")
        self.channels = channels
        self.reduction = reduction
        reduced = channels // reduction
        self.conv_red = spatial_kernel(channels, reduced, 1, bias=True, rng=rng)
        self.conv_trans = identity_kernel(spatial_kernel(reduced, reduced, 3, groups=reduced))
        self.conv_exp = spatial_kernel(reduced, channels, 1, bias=True, rng=rng)
        self.use_bn = use_bn
        if use_bn:
            self.bn_red = BatchNorm(reduced)
            self.bn_exp = BatchNorm(channels)


def motion_features(m: MEModule, x: Tensor) -> Tensor:
    """Reduced-channel motion ``M``: transformed next frame minus current frame,
    zero at the last step. Shape ``[N, T, C/r, H, W]``."""
    xr = ops.conv2d(x, m.conv_red)
    if m.use_bn:
        xr = ops.batch_norm2d(xr, m.bn_red, m.training)
    n, t, c, h, w = xr.shape
    tail = Tensor(np.zeros((n, 1, c, h, w), dtype=xr.dtype))
    if t == 1:
        return tail
    nxt = ops.conv2d(xr[:, 1:], m.conv_trans)
    return ops.concat([ops.sub(nxt, xr[:, :t - 1]), tail], axis=1)


def me_attention(m: MEModule, x: Tensor) -> Tensor:
    """Attention ``A = 2*sigmoid(conv_exp * pool(M)) - 1`` of shape ``[N, T, C, 1, 1]``."""
    ops.check_video(x)
    if x.shape[2] != m.channels:
        raise ValueError(f"ME expects {m.channels} channels, got {x.shape[2]}")
    pooled = ops.global_avg_pool_spatial(motion_features(m, x))
    logits = ops.conv2d(pooled, m.conv_exp)
    if m.use_bn:
        logits = ops.batch_norm2d(logits, m.bn_exp, m.training)
    return ops.affine(ops.sigmoid(logits), 2.0, -1.0)


def me_forward(m: MEModule, x: Tensor) -> Tensor:
    """``X + X * A`` (channel-broadcast product)."""
    a = me_attention(m, x)
    return ops.add(x, ops.mul_broadcast_channel(x, a))


def me_forward_no_residual(m: MEModule, x: Tensor) -> Tensor:
    """``X * A`` -- the ablation without the residual path."""
    return ops.mul_broadcast_channel(x, me_attention(m, x))


class SEModule(Module):
    """Per-frame squeeze-excitation: pool, 1x1 reduce, ReLU, 1x1 expand, sigmoid gate."""

    def __init__(self, channels: int, reduction: int = 16, rng: Optional[np.random.Generator] = None):
        if reduction < 1 or channels < reduction or channels % reduction:
            raise ValueError(f"reduction {reduction} must divide channels {channels}")
        self.channels = channels
        self.reduction = reduction
        self.fc1 = spatial_kernel(channels, channels // reduction, 1, bias=True, rng=rng)
        self.fc2 = spatial_kernel(channels // reduction, channels, 1, bias=True, rng=rng)


def se_gate(p: SEModule, x: Tensor) -> Tensor:
    ops.check_video(x)
    if x.shape[2] != p.channels:
        raise ValueError(f"SE expects {p.channels} channels, got {x.shape[2]}")
    s = ops.global_avg_pool_spatial(x)
    s = ops.relu(ops.conv2d(s, p.fc1))
    return ops.sigmoid(ops.conv2d(s, p.fc2))


def se_forward(p: SEModule, x: Tensor) -> Tensor:
    """``X * s`` with no residual and no interaction between frames."""
    return ops.mul_broadcast_channel(x, se_gate(p, x))
