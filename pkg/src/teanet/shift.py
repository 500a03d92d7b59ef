"""Part shift along time and the fixed kernels that reproduce it as a convolution."""
from __future__ import annotations

from typing import Optional

import numpy as np

from .core.nn import ConvKernel, temporal_kernel
from .core.ops import temporal_shift

__all__ = ["temporal_shift", "shift_init_kernel", "shift_weights", "default_fold", "shift_initialize"]


def default_fold(channels: int) -> int:
    """Width of each shifted band used when initializing network layers.

    ``C // 8`` where that is at least one channel; narrow layers (fewer than 8
    channels) still shift one channel each way so they keep temporal mixing.
    """
    if channels < 2:
        return 0
    return max(1, channels // 8)


def shift_weights(channels: int, fold: int) -> np.ndarray:
    """``[C, 3]`` taps: ``[0,0,1]`` for the first ``fold`` channels (read ``t+1``),
    ``[1,0,0]`` for the next ``fold`` (read ``t-1``), ``[0,1,0]`` elsewhere."""
    if fold < 0 or 2 * fold > channels:
        raise ValueError(f"fold {fold} does not fit {channels} channels")
    w = np.zeros((channels, 3))
    w[:fold, 2] = 1.0
    w[fold:2 * fold, 0] = 1.0
    w[2 * fold:, 1] = 1.0
    return w


def shift_init_kernel(channels: int, fold: Optional[int] = None) -> ConvKernel:
    """Channel-wise kernel-3 temporal convolution equal to :func:`temporal_shift`.

    With the default ``fold`` the channel count must be a positive multiple of 8
    so each band is whole channels.
    """
    if fold is None:
        if channels < 8 or channels % 8:
            raise ValueError(f"shift init needs channels divisible by 8, got {channels}")
        fold = channels // 8
    k = temporal_kernel(channels, 3, channelwise=True)
    return k.set_weights(shift_weights(channels, fold))


def shift_initialize(kernel: ConvKernel, fold: Optional[int] = None) -> ConvKernel:
    """Overwrite a channel-wise temporal kernel in place with shift taps."""
    if not (kernel.depthwise and kernel.kernel_t == 3):
        raise ValueError("shift initialization needs a channel-wise kernel of size 3")
    c = kernel.out_channels
    return kernel.set_weights(shift_weights(c, default_fold(c) if fold is None else fold))
