"""Independent reference implementations used as test oracles.

Everything here is written as direct summation over explicit indices in
float64, sharing no code with the library beyond reading raw weight arrays.
"""
import math

import numpy as np


def conv2d_direct(x, w, b=None, stride=1, pad=0, groups=1):
    """x [N,T,C,H,W], w [O, C/groups, kh, kw] -> [N,T,O,Ho,Wo]."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    n, t, c, h, wd = x.shape
    o, cg, kh, kw = w.shape
    og = o // groups
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wd + 2 * pad - kw) // stride + 1
    out = np.zeros((n, t, o, ho, wo))
    for oc in range(o):
        g = oc // og
        for i in range(ho):
            for j in range(wo):
                acc = np.zeros((n, t))
                for ci in range(cg):
                    cin = g * cg + ci
                    for a in range(kh):
                        for bb in range(kw):
                            yi, xj = i * stride + a - pad, j * stride + bb - pad
                            if 0 <= yi < h and 0 <= xj < wd:
                                acc += w[oc, ci, a, bb] * x[:, :, cin, yi, xj]
                out[:, :, oc, i, j] = acc
        if b is not None:
            out[:, :, oc] += b[oc]
    return out


def temporal_conv_direct(x, w, groups):
    """Zero-padded 'same' convolution along T.

    ``w`` is ``[O, C/groups, kt]``; output frame ``t`` sums tap ``k`` against
    input frame ``t + k - (kt - 1) / 2``.
    """
    x = np.asarray(x, dtype=np.float64)
    n, t, c, h, wd = x.shape
    o, cg, kt = w.shape
    og = o // groups
    half = (kt - 1) // 2
    out = np.zeros((n, t, o, h, wd))
    for oc in range(o):
        g = oc // og
        for tt in range(t):
            for ci in range(cg):
                for k in range(kt):
                    src = tt + k - half
                    if 0 <= src < t:
                        out[:, tt, oc] += w[oc, ci, k] * x[:, src, g * cg + ci]
    return out


def shift_direct(x, fold):
    """Index remap: channel c of frame t reads frame t+1 (c < fold), t-1
    (fold <= c < 2 fold) or t, with zeros outside the clip."""
    x = np.asarray(x)
    n, t, c, h, w = x.shape
    out = np.zeros_like(x)
    for tt in range(t):
        for ch in range(c):
            if ch < fold:
                src = tt + 1
            elif ch < 2 * fold:
                src = tt - 1
            else:
                src = tt
            if 0 <= src < t:
                out[:, tt, ch] = x[:, src, ch]
    return out


def batch_norm_direct(x, gamma, beta, eps):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    for ch in range(x.shape[2]):
        v = x[:, :, ch]
        mu = v.sum() / v.size
        var = ((v - mu) ** 2).sum() / v.size
        out[:, :, ch] = gamma[ch] * (v - mu) / math.sqrt(var + eps) + beta[ch]
    return out


def sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def me_direct(x, w_red, b_red, w_trans, w_exp, b_exp, residual=True):
    """Motion excitation written out step by step:
    reduce, transform next frame, subtract, pool, expand, 2*sigmoid-1, excite."""
    x = np.asarray(x, dtype=np.float64)
    n, t, c, h, w = x.shape
    xr = conv2d_direct(x, w_red, b_red)
    cr = xr.shape[2]
    m = np.zeros_like(xr)
    for tt in range(t - 1):
        nxt = conv2d_direct(xr[:, tt + 1:tt + 2], w_trans, pad=1, groups=cr)[:, 0]
        m[:, tt] = nxt - xr[:, tt]
    pooled = m.mean(axis=(3, 4), keepdims=True)
    a = 2.0 * sigmoid(conv2d_direct(pooled, w_exp, b_exp)) - 1.0
    return x + x * a if residual else x * a


def mta_direct(x, temp_w, spa_w, stride=1):
    """Linear aggregation cascade (no normalization or activations).

    ``temp_w[i]`` is the ``[C/4, 3]`` channel-wise temporal kernel and
    ``spa_w[i]`` the ``[C/4, C/4, 3, 3]`` spatial kernel of fragment ``i+2``.
    """
    x = np.asarray(x, dtype=np.float64)
    q = x.shape[2] // 4
    frags = [x[:, :, i * q:(i + 1) * q] for i in range(4)]
    outs = [frags[0][:, :, :, ::stride, ::stride]]
    prev = None
    for i in range(1, 4):
        inp = frags[i] if prev is None else frags[i][:, :, :, ::stride, ::stride] + prev
        tw = np.asarray(temp_w[i - 1], dtype=np.float64)[:, None, :]
        y = temporal_conv_direct(inp, tw, groups=q)
        y = conv2d_direct(y, spa_w[i - 1], stride=stride if i == 1 else 1, pad=1)
        outs.append(y)
        prev = y
    return np.concatenate(outs, axis=2)


def center_indices(t_raw, t):
    """Test-mode frame per segment, segment i = [floor(i t_raw / t), floor((i+1) t_raw / t))."""
    out = []
    for i in range(t):
        lo, hi = (i * t_raw) // t, ((i + 1) * t_raw) // t
        out.append(lo + (hi - lo) // 2 if hi > lo else max(lo - 1, 0))
    return out


def resnet50_params_by_hand(num_classes=1000):
    """Parameter count of the standard bottleneck ResNet-50 (conv weights, BN
    scale/shift, classifier) from the usual 3/4/6/3 layout."""
    total = 7 * 7 * 3 * 64 + 2 * 64
    c_in = 64
    for blocks, width in zip((3, 4, 6, 3), (64, 128, 256, 512)):
        out = 4 * width
        for b in range(blocks):
            total += c_in * width + 2 * width
            total += 9 * width * width + 2 * width
            total += width * out + 2 * out
            if b == 0:
                total += c_in * out + 2 * out
            c_in = out
    return total + 2048 * num_classes + num_classes
