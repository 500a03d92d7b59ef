"""Property suite run by ``teanet selfcheck``.

Each check returns ``(passed, detail)``; ``anchored`` marks checks that
reproduce a number or identity stated by the method description rather than an
artifact-internal invariant.
"""
from __future__ import annotations

import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from . import analyzer, checkpoint, data
from .core import ops
from .core.autograd import Tensor
from .core.gradcheck import check_module_grads
from .me import MEModule, SEModule, me_attention, me_forward, se_forward
from .mta import MTAModule, mta_forward, mta_probe_temporal_rf
from .net import TEABlock, build_network, preset
from .shift import shift_init_kernel


@dataclass
class Check:
    name: str
    fn: Callable[[], tuple]
    anchored: bool = False


def _projection_loss(forward, seed=0):
    """Scalar loss ``sum(R * f(x))`` with a fixed random ``R``; a plain sum
    would have zero gradient through batch norm."""
    cache = {}

    def loss(m, *xs):
        y = forward(m, *xs)
        if y.shape not in cache:
            cache[y.shape] = np.random.default_rng(seed).standard_normal(y.shape)
        return ops.sum_all(ops.mul(y, Tensor(cache[y.shape])))
    return loss


def shift_equivalence(n_shapes: int = 100, seed: int = 0) -> tuple:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_shapes):
        c = int(rng.choice([8, 16, 64]))
        t = int(rng.integers(1, 9))
        n, h, w = (int(v) for v in rng.integers(1, 4, size=3))
        x = Tensor(rng.standard_normal((n, t, c, h, w)).astype(np.float32))
        a = ops.temporal_shift(x).data
        b = ops.temporal_conv1d_cw(x, shift_init_kernel(c)).data
        worst = max(worst, float(np.abs(a - b).max()))
    return worst == 0.0, f"max |shift - conv| = {worst!r} over {n_shapes} shapes"


def shift_network_equivalence() -> tuple:
    net = build_network(preset("toy"), seed=3).eval()
    x = Tensor(np.random.default_rng(3).random((2, 8, 3, 16, 16)).astype(np.float32))
    a = net.forward(x).data
    b = net.set_shift_ops(True).forward(x).data
    d = float(np.abs(a - b).max())
    return d < 1e-6, f"max |conv net - shift net| = {d:.3g}"


def me_identity() -> tuple:
    rng = np.random.default_rng(1)
    m = MEModule(32, 8, rng=rng)
    m.conv_exp.set_weights(np.zeros(m.conv_exp.weight.shape), np.zeros(32))
    x = Tensor(rng.standard_normal((2, 4, 32, 5, 5)).astype(np.float32))
    ok = np.array_equal(me_forward(m, x).data, x.data)
    return ok, "zeroed conv_exp gives exact identity" if ok else "identity violated"


def me_range(n: int = 1000) -> tuple:
    rng = np.random.default_rng(2)
    lo, hi = 1.0, -1.0
    for i in range(n):
        m = MEModule(16, 4, rng=rng)
        x = Tensor(rng.standard_normal((1, 3, 16, 2, 2)).astype(np.float32))
        a = me_attention(m, x).data
        lo, hi = min(lo, float(a.min())), max(hi, float(a.max()))
    ok = -1.0 < lo and hi < 1.0
    return ok, f"attention in [{lo:.4f}, {hi:.4f}] over {n} draws"


def mta_radii(seeds=range(5)) -> tuple:
    got = [mta_probe_temporal_rf(MTAModule(16, rng=np.random.default_rng(s), temporal_init="random"), seed=s)
           for s in seeds]
    ok = all(r == (0, 1, 2, 3) for r in got)
    return ok, f"fragment radii {got[0]} (all seeds equal: {len(set(got)) == 1})"


def rf_agreement() -> tuple:
    rows = []
    for v in ("TEA", "PLAIN_2D", "P21D_RESNET", "MTA_ONLY", "ME_ONLY", "ME_NO_RESIDUAL",
              "P21D_SENET", "P21D_RES2NET"):
        spec = preset("toy").with_variant(v)
        rf = analyzer.temporal_rf(spec)
        rows.append((v, (rf.back, rf.forward), analyzer.probe_network_rf(spec)))
    bad = [r for r in rows if r[1] != r[2]]
    return not bad, "analytic == probe for all toy variants" if not bad else f"mismatch: {bad}"


def _max_err(errors: dict) -> float:
    return max(errors.values())


def _generic_me(m: MEModule, rng) -> MEModule:
    # with the identity init the conv_red bias cancels in the frame difference
    # and its exact gradient is zero, which no relative error can resolve
    m.conv_trans.set_weights(0.5 * rng.standard_normal(m.conv_trans.weight.shape))
    return m


def grad_me() -> tuple:
    rng = np.random.default_rng(4)
    m = _generic_me(MEModule(8, 2, rng=rng), rng)
    x = Tensor(rng.standard_normal((1, 3, 8, 3, 3)))
    err = _max_err(check_module_grads(_projection_loss(me_forward), m, [x], eps=1e-6))
    return err < 1e-4, f"max rel err {err:.2e}"


def grad_mta() -> tuple:
    rng = np.random.default_rng(5)
    m = MTAModule(8, rng=rng, temporal_init="random")
    x = Tensor(rng.standard_normal((2, 3, 8, 3, 3)))
    err = _max_err(check_module_grads(_projection_loss(mta_forward), m, [x], eps=1e-6))
    return err < 1e-4, f"max rel err {err:.2e}"


def grad_se() -> tuple:
    rng = np.random.default_rng(6)
    m = SEModule(8, 2, rng=rng)
    x = Tensor(rng.standard_normal((1, 3, 8, 3, 3)))
    err = _max_err(check_module_grads(_projection_loss(se_forward), m, [x], eps=1e-6))
    return err < 1e-4, f"max rel err {err:.2e}"


def grad_tea_block() -> tuple:
    rng = np.random.default_rng(7)
    b = TEABlock(16, 8, stride=1, reduction=4, rng=rng)
    _generic_me(b.excite, rng)
    x = Tensor(rng.standard_normal((2, 3, 16, 3, 3)))
    err = _max_err(check_module_grads(_projection_loss(lambda m, t: m.forward(t)), b, [x], eps=1e-6))
    return err < 1e-4, f"max rel err {err:.2e}"


def flops_claims() -> tuple:
    plain = analyzer.count_flops(preset("resnet50-2d")).totals["macs"]
    tea = analyzer.count_flops(preset("resnet50-tea")).totals["macs"]
    ratio = tea / plain
    ok = abs(plain / 33e9 - 1) <= 0.1 and abs(tea / 35e9 - 1) <= 0.1 and 1.03 <= ratio <= 1.10
    return ok, f"plain {plain / 1e9:.2f}G, TEA {tea / 1e9:.2f}G, ratio {ratio:.3f}"


def mta_param_economy() -> tuple:
    bad = [c for c in range(4, 513, 4) if analyzer.mta_params(c) >= analyzer.conv3x3_params(c)]
    return not bad, "MTA(C) < 3x3 conv for C in 4..512" if not bad else f"violations at C={bad[:5]}"


def plain_permutation() -> tuple:
    rng = np.random.default_rng(8)
    x = rng.random((1, 8, 3, 16, 16)).astype(np.float32)
    perm = rng.permutation(8)
    plain = build_network(preset("toy-2d"), seed=8).eval()
    tea = build_network(preset("toy"), seed=8).eval()
    dp = float(np.abs(plain.forward(Tensor(x)).data - plain.forward(Tensor(x[:, perm])).data).max())
    dt = float(np.abs(tea.forward(Tensor(x)).data - tea.forward(Tensor(x[:, perm])).data).max())
    return dp < 1e-5 and dt > 1e-5, f"plain change {dp:.2e}, TEA change {dt:.2e}"


def format_roundtrips() -> tuple:
    clip = data.generate_dataset(data.SyntheticSpec(frames=5), 1)[2]
    net = build_network(preset("toy"), seed=9)
    with tempfile.TemporaryDirectory() as tmp:
        p = data.write_clip(Path(tmp) / "c.teac", clip)
        back = data.read_clip(p)
        ok_clip = np.array_equal(back.frames, clip.frames) and back.label == clip.label
        raw = p.read_bytes()
        errors = []
        for bad, expect in ((b"XXXX" + raw[4:], data.BadMagicError), (raw[:-3], data.TruncatedPayloadError)):
            try:
                data.decode_clip(bad)
                errors.append(False)
            except expect:
                errors.append(True)
        cp = checkpoint.save_checkpoint(Path(tmp) / "n.teaw", net)
        loaded, _ = checkpoint.load_checkpoint(cp)
        ok_ckpt = all(np.array_equal(loaded.state()[k], v) for k, v in net.state().items())
        buf = bytearray(cp.read_bytes())
        buf[-1] ^= 0xFF
        try:
            checkpoint.decode_checkpoint(bytes(buf))
            errors.append(False)
        except checkpoint.DigestMismatchError:
            errors.append(True)
    ok = ok_clip and ok_ckpt and all(errors)
    return ok, f"clip {ok_clip}, checkpoint {ok_ckpt}, corruption detected {all(errors)}"


def sampling_partition() -> tuple:
    for t_raw in range(1, 40):
        for t in range(1, 12):
            b = data.segment_bounds(t_raw, t)
            sizes = [e - s for s, e in b]
            if b[0][0] != 0 or b[-1][1] != t_raw or any(b[i][1] != b[i + 1][0] for i in range(t - 1)):
                return False, f"segments do not tile [0, {t_raw}) for T={t}"
            if max(sizes) - min(sizes) > 1:
                return False, f"uneven segments for T_raw={t_raw}, T={t}"
    return True, "segments tile the clip with sizes within 1"


def dataset_determinism() -> tuple:
    spec = data.SyntheticSpec(frames=6)
    a = data.generate_dataset(spec, 2)
    b = data.generate_dataset(spec, 2)
    ok = all(np.array_equal(x.frames, y.frames) for x, y in zip(a, b))
    return ok, "identical datasets from identical seeds" if ok else "datasets differ"


CHECKS = [
    Check("shift_conv_equivalence", shift_equivalence, anchored=True),
    Check("shift_init_network_equivalence", shift_network_equivalence),
    Check("me_zero_identity", me_identity, anchored=True),
    Check("me_attention_range", me_range, anchored=True),
    Check("mta_fragment_radii", mta_radii, anchored=True),
    Check("temporal_rf_agreement", rf_agreement),
    Check("gradcheck_me", grad_me),
    Check("gradcheck_mta", grad_mta),
    Check("gradcheck_se", grad_se),
    Check("gradcheck_tea_block", grad_tea_block),
    Check("flops_resnet50", flops_claims, anchored=True),
    Check("mta_param_economy", mta_param_economy, anchored=True),
    Check("plain2d_frame_permutation", plain_permutation),
    Check("format_roundtrips", format_roundtrips),
    Check("sampling_partition", sampling_partition),
    Check("dataset_determinism", dataset_determinism),
]


def run_selfcheck(inject_fault: bool = False) -> dict:
    """Run every check; ``inject_fault`` flips the sign of conv weight
    gradients so the gradient checks must fail."""
    prev = ops.FAULTS["flip_conv_weight_grad"]
    ops.FAULTS["flip_conv_weight_grad"] = bool(inject_fault)
    results = []
    try:
        for chk in CHECKS:
            t0 = time.perf_counter()
            try:
                passed, detail = chk.fn()
            except Exception as exc:  # a crashing property is a failing property
                passed, detail = False, f"{type(exc).__name__}: {exc}"
            results.append({"name": chk.name, "passed": bool(passed), "detail": detail,
                            "paper_anchored": chk.anchored,
                            "seconds": round(time.perf_counter() - t0, 3)})
    finally:
        ops.FAULTS["flip_conv_weight_grad"] = prev
    return {
        "passed": all(r["passed"] for r in results),
        "checks": results,
        "counts": {"total": len(results), "passed": sum(r["passed"] for r in results),
                   "failed": sum(not r["passed"] for r in results),
                   "paper_anchored": sum(r["paper_anchored"] for r in results)},
        "inject_fault": bool(inject_fault),
    }
