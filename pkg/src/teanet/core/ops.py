"""Differentiable operators over ``[N, T, C, H, W]`` tensors.

Every function takes and returns :class:`Tensor` values. Arithmetic runs in the
dtype of the inputs, so float64 tensors give a float64 replay of the same graph.
"""
from __future__ import annotations

from typing import Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .autograd import Tensor, make_result

# Negative-control switch for the self-check: flips the sign of conv weight
# gradients so the gradient checks must fail.
FAULTS = {"flip_conv_weight_grad": False}


def check_video(x: Tensor, name: str = "x") -> None:
    if x.ndim != 5:
        raise ValueError(f"{name} must be [N,T,C,H,W], got shape {x.shape}")


def _same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ValueError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def _result_dtype(*arrays):
    return np.result_type(*[a.dtype for a in arrays])


# ---------------------------------------------------------------- elementwise

def add(x: Tensor, y: Tensor) -> Tensor:
    _same_shape(x, y, "add")
    return make_result("add", x.data + y.data, (x, y), lambda g: (g, g))


def sub(x: Tensor, y: Tensor) -> Tensor:
    _same_shape(x, y, "sub")
    return make_result("sub", x.data - y.data, (x, y), lambda g: (g, -g))


def mul(x: Tensor, y: Tensor) -> Tensor:
    _same_shape(x, y, "mul")
    xd, yd = x.data, y.data
    return make_result("mul", xd * yd, (x, y), lambda g: (g * yd, g * xd))


def affine(x: Tensor, scale: float, offset: float) -> Tensor:
    """``scale * x + offset`` with python-float constants."""
    out = x.data * x.dtype.type(scale)
    if offset:
        out = out + x.dtype.type(offset)
    return make_result("affine", out, (x,), lambda g: (g * x.dtype.type(scale),))


def sigmoid(x: Tensor) -> Tensor:
    xd = x.data
    # split by sign so exp never overflows
    e = np.exp(-np.abs(xd))
    s = np.where(xd >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(xd.dtype)
    return make_result("sigmoid", s, (x,), lambda g: (g * s * (1 - s),))


def relu(x: Tensor) -> Tensor:
    out = np.maximum(x.data, 0)
    return make_result("relu", out, (x,), lambda g: (np.where(out > 0, g, 0).astype(g.dtype, copy=False),))


def mul_broadcast_channel(x: Tensor, a: Tensor) -> Tensor:
    """Channel-wise product of ``x [N,T,C,H,W]`` with ``a [N,T,C,1,1]``."""
    check_video(x)
    n, t, c = x.shape[:3]
    if a.shape != (n, t, c, 1, 1):
        raise ValueError(f"mul_broadcast_channel: expected a of shape {(n, t, c, 1, 1)}, got {a.shape}")
    xd, ad = x.data, a.data

    def backward(g):
        return g * ad, (g * xd).sum(axis=(3, 4), keepdims=True)

    return make_result("mul_broadcast_channel", xd * ad, (x, a), backward)


# ---------------------------------------------------------------- structural

def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    src = x.shape
    return make_result("reshape", x.data.reshape(shape), (x,), lambda g: (g.reshape(src),))


def getitem(x: Tensor, index) -> Tensor:
    """Basic (slice/int) indexing; the backward scatters into a zero buffer."""
    out = x.data[index]
    if not isinstance(out, np.ndarray):
        out = np.asarray(out, dtype=x.dtype)
    else:
        out = np.ascontiguousarray(out)

    def backward(g):
        gx = np.zeros_like(x.data)
        gx[index] = g
        return (gx,)

    return make_result("getitem", out, (x,), backward)


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    sizes = [t.shape[axis] for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        parts = []
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            parts.append(g[tuple(idx)])
        return tuple(parts)

    return make_result("concat", out, tuple(tensors), backward)


def split_channels(x: Tensor, parts: int) -> list:
    check_video(x)
    c = x.shape[2]
    if c % parts:
        raise ValueError(f"cannot split {c} channels into {parts} equal fragments")
    w = c // parts
    return [x[:, :, i * w:(i + 1) * w] for i in range(parts)]


def sum_all(x: Tensor) -> Tensor:
    shape = x.shape
    out = np.asarray(x.data.sum(dtype=x.dtype), dtype=x.dtype).reshape(())
    return make_result("sum", out, (x,), lambda g: (np.broadcast_to(g, shape).astype(x.dtype),))


def mean_axis(x: Tensor, axis: int) -> Tensor:
    n = x.shape[axis]
    shape = x.shape

    def backward(g):
        return (np.broadcast_to(np.expand_dims(g, axis) / n, shape).astype(x.dtype),)

    return make_result("mean", x.data.mean(axis=axis), (x,), backward)


# ---------------------------------------------------------------- pooling

def global_avg_pool_spatial(x: Tensor) -> Tensor:
    """Mean over H and W, keeping singleton spatial axes."""
    check_video(x)
    h, w = x.shape[3:]
    if h < 1 or w < 1:
        raise ValueError("spatial dims must be >= 1")
    shape = x.shape

    def backward(g):
        return (np.broadcast_to(g / (h * w), shape).astype(x.dtype),)

    return make_result("global_avg_pool_spatial", x.data.mean(axis=(3, 4), keepdims=True), (x,), backward)


def max_pool2d(x: Tensor, kernel: int = 3, stride: int = 2, pad: int = 1) -> Tensor:
    check_video(x)
    n, t, c, h, w = x.shape
    xd = x.data.reshape(n * t, c, h, w)
    xp = np.pad(xd, ((0, 0), (0, 0), (pad, pad), (pad, pad)), constant_values=-np.inf)
    win = sliding_window_view(xp, (kernel, kernel), axis=(2, 3))[:, :, ::stride, ::stride]
    ho, wo = win.shape[2:4]
    flat = win.reshape(n * t, c, ho, wo, kernel * kernel)
    arg = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]

    def backward(g):
        gp = np.zeros_like(xp)
        di, dj = np.divmod(arg, kernel)
        b, ch, oi, oj = np.indices(arg.shape)
        np.add.at(gp, (b, ch, oi * stride + di, oj * stride + dj), g.reshape(arg.shape))
        return (gp[:, :, pad:pad + h, pad:pad + w].reshape(x.shape),)

    return make_result("max_pool2d", out.reshape(n, t, c, ho, wo), (x,), backward)


def spatial_subsample(x: Tensor, stride: int) -> Tensor:
    if stride == 1:
        return x
    return x[:, :, :, ::stride, ::stride]


# ---------------------------------------------------------------- convolutions

def _conv_out(size: int, k: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - k) // stride + 1


def conv2d(x: Tensor, k) -> Tensor:
    """2D convolution applied to each of the ``N*T`` frames of ``x``.

    ``k`` is a :class:`~teanet.core.nn.ConvKernel` with ``kernel_t == 1``.
    """
    check_video(x)
    if k.kernel_t != 1:
        raise ValueError("conv2d needs a kernel with kernel_t == 1")
    n, t, c, h, w = x.shape
    if c != k.in_channels:
        raise ValueError(f"conv2d: input has {c} channels, kernel expects {k.in_channels}")
    kh, kw, s, p = k.kernel_h, k.kernel_w, k.stride, k.pad
    ho, wo = _conv_out(h, kh, s, p), _conv_out(w, kw, s, p)
    if ho < 1 or wo < 1:
        raise ValueError(f"conv2d: zero-size output for input {h}x{w}, kernel {kh}x{kw}")

    weight = k.weight
    wd = weight.data[:, :, 0]  # [O, Cg, kh, kw]
    dtype = _result_dtype(x.data, wd)
    xd = x.data.reshape(n * t, c, h, w).astype(dtype, copy=False)
    wd = wd.astype(dtype, copy=False)
    out, saved = _conv2d_forward(xd, wd, k.groups, s, p, ho, wo)
    inputs = [x, weight]
    if k.bias is not None:
        out += k.bias.data.astype(dtype)[None, :, None, None]
        inputs.append(k.bias)

    def backward(g):
        g = g.reshape(n * t, -1, ho, wo)
        gx, gw = _conv2d_backward(g, xd, wd, k.groups, s, p, saved)
        if FAULTS["flip_conv_weight_grad"]:
            gw = -gw
        grads = [gx.reshape(x.shape), gw[:, :, None].astype(weight.dtype)]
        if k.bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)).astype(k.bias.dtype))
        return grads

    return make_result("conv2d", out.reshape(n, t, -1, ho, wo), inputs, backward)


def _pad_hw(a: np.ndarray, p: int) -> np.ndarray:
    if p == 0:
        return a
    return np.pad(a, ((0, 0), (0, 0), (p, p), (p, p)))


def _windows(xp: np.ndarray, kh: int, kw: int, s: int, ho: int, wo: int) -> np.ndarray:
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    return win[:, :, : (ho - 1) * s + 1: s, : (wo - 1) * s + 1: s]  # [B,C,Ho,Wo,kh,kw]


def _conv2d_forward(xd, wd, groups, s, p, ho, wo):
    b, c = xd.shape[:2]
    o, cg, kh, kw = wd.shape
    if kh == kw == 1 and s == 1 and p == 0 and groups == 1:
        out = np.matmul(wd.reshape(o, c), xd.reshape(b, c, -1))
        return out.reshape(b, o, ho, wo), {"path": "pointwise"}
    xp = _pad_hw(xd, p)
    if groups == c == o and cg == 1:
        out = np.zeros((b, o, ho, wo), dtype=xd.dtype)
        for i in range(kh):
            for j in range(kw):
                out += wd[:, 0, i, j][None, :, None, None] * \
                    xp[:, :, i:i + (ho - 1) * s + 1:s, j:j + (wo - 1) * s + 1:s]
        return out, {"path": "depthwise", "xp": xp}
    og = o // groups
    cols_all, outs = [], []
    for gi in range(groups):
        xs = xp[:, gi * cg:(gi + 1) * cg]
        cols = _windows(xs, kh, kw, s, ho, wo).transpose(0, 1, 4, 5, 2, 3).reshape(b, cg * kh * kw, ho * wo)
        wmat = wd[gi * og:(gi + 1) * og].reshape(og, -1)
        outs.append(np.matmul(wmat, cols))
        cols_all.append(cols)
    out = np.concatenate(outs, axis=1).reshape(b, o, ho, wo)
    return out, {"path": "im2col", "cols": cols_all, "hp": xp.shape[2], "wp": xp.shape[3]}


def _conv2d_backward(g, xd, wd, groups, s, p, saved):
    b, c, h, w = xd.shape
    o, cg, kh, kw = wd.shape
    ho, wo = g.shape[2:]
    path = saved["path"]
    if path == "pointwise":
        gf = g.reshape(b, o, -1)
        gw = np.tensordot(gf, xd.reshape(b, c, -1), axes=([0, 2], [0, 2])).reshape(o, c, 1, 1)
        gx = np.matmul(wd.reshape(o, c).T, gf).reshape(xd.shape)
        return gx, gw
    if path == "depthwise":
        xp = saved["xp"]
        gxp = np.zeros_like(xp)
        gw = np.zeros_like(wd)
        for i in range(kh):
            for j in range(kw):
                sl = (slice(None), slice(None), slice(i, i + (ho - 1) * s + 1, s), slice(j, j + (wo - 1) * s + 1, s))
                gw[:, 0, i, j] = (g * xp[sl]).sum(axis=(0, 2, 3))
                gxp[sl] += g * wd[:, 0, i, j][None, :, None, None]
        return gxp[:, :, p:p + h, p:p + w], gw
    og = o // groups
    gxp = np.zeros((b, c, saved["hp"], saved["wp"]), dtype=xd.dtype)
    gws = []
    gf = g.reshape(b, o, ho * wo)
    for gi in range(groups):
        cols = saved["cols"][gi]
        gsub = gf[:, gi * og:(gi + 1) * og]
        gws.append(np.tensordot(gsub, cols, axes=([0, 2], [0, 2])).reshape(og, cg, kh, kw))
        wmat = wd[gi * og:(gi + 1) * og].reshape(og, -1)
        gcols = np.matmul(wmat.T, gsub).reshape(b, cg, kh, kw, ho, wo)
        for i in range(kh):
            for j in range(kw):
                gxp[:, gi * cg:(gi + 1) * cg, i:i + (ho - 1) * s + 1:s, j:j + (wo - 1) * s + 1:s] += gcols[:, :, i, j]
    return gxp[:, :, p:p + h, p:p + w], np.concatenate(gws, axis=0)


def temporal_conv1d(x: Tensor, k) -> Tensor:
    """1D convolution along T at every spatial site, zero-padded at both ends.

    Works for channel-wise kernels (``groups == C``) and full kernels
    (``groups == 1``); output keeps the input's T.
    """
    check_video(x)
    n, t, c, h, w = x.shape
    if t < 1:
        raise ValueError("temporal conv needs T >= 1")
    if k.kernel_h != 1 or k.kernel_w != 1:
        raise ValueError("temporal conv needs a kernel with kernel_h == kernel_w == 1")
    if c != k.in_channels:
        raise ValueError(f"temporal conv: input has {c} channels, kernel expects {k.in_channels}")
    kt, pt = k.kernel_t, k.pad_t
    if t + 2 * pt - kt + 1 != t:
        raise ValueError("temporal conv padding must preserve T (pad_t == (kernel_t - 1) / 2)")
    weight = k.weight
    wd = weight.data[:, :, :, 0, 0]  # [O, Cg, kt]
    dtype = _result_dtype(x.data, wd)
    xd = x.data.astype(dtype, copy=False)
    wd = wd.astype(dtype, copy=False)
    xp = np.pad(xd, ((0, 0), (pt, pt), (0, 0), (0, 0), (0, 0))) if pt else xd
    depthwise = k.groups == c == k.out_channels
    if not depthwise and k.groups != 1:
        raise ValueError("temporal conv supports groups == C (channel-wise) or groups == 1")

    if depthwise:
        out = wd[:, 0, 0][None, None, :, None, None] * xp[:, 0:t]
        for j in range(1, kt):
            out = out + wd[:, 0, j][None, None, :, None, None] * xp[:, j:j + t]
    else:
        out = np.zeros((n, t, k.out_channels, h, w), dtype=dtype)
        for j in range(kt):
            out += np.einsum("ntchw,oc->ntohw", xp[:, j:j + t], wd[:, :, j], optimize=True)
    inputs = [x, weight]
    if k.bias is not None:
        out = out + k.bias.data.astype(dtype)[None, None, :, None, None]
        inputs.append(k.bias)

    def backward(g):
        gxp = np.zeros_like(xp)
        gw = np.zeros_like(wd)
        for j in range(kt):
            if depthwise:
                gw[:, 0, j] = (g * xp[:, j:j + t]).sum(axis=(0, 1, 3, 4))
                gxp[:, j:j + t] += g * wd[:, 0, j][None, None, :, None, None]
            else:
                gw[:, :, j] = np.einsum("ntohw,ntchw->oc", g, xp[:, j:j + t], optimize=True)
                gxp[:, j:j + t] += np.einsum("ntohw,oc->ntchw", g, wd[:, :, j], optimize=True)
        if FAULTS["flip_conv_weight_grad"]:
            gw = -gw
        grads = [gxp[:, pt:pt + t], gw[:, :, :, None, None].astype(weight.dtype)]
        if k.bias is not None:
            grads.append(g.sum(axis=(0, 1, 3, 4)).astype(k.bias.dtype))
        return grads

    return make_result("temporal_conv1d", out, inputs, backward)


def temporal_conv1d_cw(x: Tensor, k) -> Tensor:
    """Channel-wise temporal convolution; rejects kernels that mix channels."""
    if k.groups != x.shape[2]:
        raise ValueError(f"channel-wise temporal conv needs groups == C ({x.shape[2]}), got {k.groups}")
    return temporal_conv1d(x, k)


def temporal_shift(x: Tensor, fold: Optional[int] = None) -> Tensor:
    """Part shift along T with zero-filled boundaries.

    Channels ``[0, fold)`` read frame ``t+1``, channels ``[fold, 2*fold)`` read
    frame ``t-1`` and the rest pass through. ``fold`` defaults to ``C // 8``.
    """
    check_video(x)
    c, t = x.shape[2], x.shape[1]
    if fold is None:
        if c < 8:
            raise ValueError(f"temporal shift needs at least 8 channels, got {c}")
        fold = c // 8
    if fold < 0 or 2 * fold > c:
        raise ValueError(f"shift fold {fold} does not fit {c} channels")
    xd = x.data
    out = np.zeros_like(xd)
    out[:, :t - 1, :fold] = xd[:, 1:, :fold]
    out[:, 1:, fold:2 * fold] = xd[:, :t - 1, fold:2 * fold]
    out[:, :, 2 * fold:] = xd[:, :, 2 * fold:]

    def backward(g):
        gx = np.zeros_like(g)
        gx[:, 1:, :fold] = g[:, :t - 1, :fold]
        gx[:, :t - 1, fold:2 * fold] = g[:, 1:, fold:2 * fold]
        gx[:, :, 2 * fold:] = g[:, :, 2 * fold:]
        return (gx,)

    return make_result("temporal_shift", out, (x,), backward)


# ---------------------------------------------------------------- normalization

def batch_norm2d(x: Tensor, bn, training: bool) -> Tensor:
    """Per-channel normalization treating ``N*T*H*W`` as the batch.

    Training mode normalizes with batch statistics and updates ``bn``'s running
    statistics; eval mode uses the running statistics.
    """
    check_video(x)
    c = x.shape[2]
    if bn.scale.shape != (c,):
        raise ValueError(f"batch_norm2d: {c} channels but scale of shape {bn.scale.shape}")
    dtype = _result_dtype(x.data, bn.scale.data)
    n, t, _, h, w = x.shape
    # [N*T, C, H*W] view keeps the channel reductions cheap
    xr = x.data.astype(dtype, copy=False).reshape(n * t, c, h * w)
    gamma = bn.scale.data.astype(dtype)
    beta = bn.shift.data.astype(dtype)
    eps = bn.eps
    if training:
        m = n * t * h * w
        mean = np.einsum("ncs->c", xr) / m
        centered = xr - mean[:, None]
        var = np.einsum("ncs,ncs->c", centered, centered) / m
        inv = (1.0 / np.sqrt(var + eps)).astype(dtype)
        unbiased = var * (m / max(m - 1, 1))
        mom = bn.momentum
        bn.running_mean = ((1 - mom) * bn.running_mean + mom * mean).astype(bn.running_mean.dtype)
        bn.running_var = ((1 - mom) * bn.running_var + mom * unbiased).astype(bn.running_var.dtype)
        out = centered * (gamma * inv)[:, None] + beta[:, None]

        def backward(g):
            g3 = g.reshape(n * t, c, h * w)
            gb = np.einsum("ncs->c", g3)
            gc = np.einsum("ncs,ncs->c", g3, centered)
            gx = (gamma * inv)[:, None] * (g3 - (gb / m)[:, None] - centered * (inv * inv * gc / m)[:, None])
            return (gx.reshape(g.shape).astype(dtype, copy=False), (gc * inv).astype(bn.scale.dtype),
                    gb.astype(bn.shift.dtype))
    else:
        inv = (1.0 / np.sqrt(bn.running_var.astype(dtype) + eps)).astype(dtype)
        rm = bn.running_mean.astype(dtype)
        out = (xr - rm[:, None]) * (gamma * inv)[:, None] + beta[:, None]

        def backward(g):
            g3 = g.reshape(n * t, c, h * w)
            gs = np.einsum("ncs,ncs->c", g3, xr - rm[:, None]) * inv
            return ((g3 * (gamma * inv)[:, None]).reshape(g.shape), gs.astype(bn.scale.dtype),
                    np.einsum("ncs->c", g3).astype(bn.shift.dtype))

    out = out.reshape(x.shape)
    return make_result("batch_norm2d", out.astype(dtype, copy=False), (x, bn.scale, bn.shift), backward)


# ---------------------------------------------------------------- heads

def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """``x [M, D] @ weight[K, D]^T + bias``."""
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ValueError(f"linear: incompatible shapes {x.shape} and {weight.shape}")
    xd, wd = x.data, weight.data
    out = xd @ wd.T
    inputs = [x, weight]
    if bias is not None:
        out = out + bias.data
        inputs.append(bias)

    def backward(g):
        grads = [g @ wd, g.T @ xd]
        if bias is not None:
            grads.append(g.sum(axis=0))
        return grads

    return make_result("linear", out, inputs, backward)


def dropout(x: Tensor, p: float, rng: np.random.Generator, training: bool) -> Tensor:
    if not training or p == 0.0:
        return x
    keep = (rng.random(x.shape) >= p).astype(x.dtype) / x.dtype.type(1.0 - p)
    return make_result("dropout", x.data * keep, (x,), lambda g: (g * keep,))


def softmax_cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of integer ``labels`` under ``softmax(logits)``."""
    if logits.ndim != 2:
        raise ValueError(f"logits must be [N, K], got {logits.shape}")
    labels = np.asarray(labels, dtype=np.int64)
    n, k = logits.shape
    if labels.shape != (n,):
        raise ValueError(f"expected {n} labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"labels must lie in [0, {k})")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - logsum
    loss = -logp[np.arange(n), labels].mean()

    def backward(g):
        probs = np.exp(logp)
        probs[np.arange(n), labels] -= 1.0
        return (probs * (g / n),)

    return make_result("softmax_cross_entropy", np.asarray(loss, dtype=logits.dtype), (logits,), backward)
