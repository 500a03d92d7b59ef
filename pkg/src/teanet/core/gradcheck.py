"""Central finite-difference gradient checks, replayed in float64."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .autograd import Tensor, Tape
from .nn import Module


def relative_error(g_ad: np.ndarray, g_fd: np.ndarray) -> np.ndarray:
    return np.abs(g_ad - g_fd) / np.maximum(1e-8, np.abs(g_ad) + np.abs(g_fd))


def _scalar(y: Tensor) -> float:
    if y.size != 1:
        raise ValueError(f"gradient check needs a scalar function, got output shape {y.shape}")
    return float(y.data.reshape(-1)[0])


def numeric_grad(f: Callable[[], Tensor], target: Tensor, eps: float) -> np.ndarray:
    """Central differences of ``f()`` with respect to ``target.data`` (perturbed in place)."""
    flat = target.data.reshape(-1)
    out = np.zeros(flat.size)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        plus = _scalar(f())
        flat[i] = orig - eps
        minus = _scalar(f())
        flat[i] = orig
        out[i] = (plus - minus) / (2 * eps)
    return out.reshape(target.shape)


def grad_check(f: Callable[[Tensor], Tensor], x: Tensor, eps: float = 1e-3) -> float:
    """Max relative error between autodiff and central differences of ``f`` at ``x``.

    ``f`` must be deterministic and return a scalar tensor. ``x`` is promoted to
    float64 so the comparison is not dominated by float32 rounding.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    x64 = Tensor(np.array(x.data, dtype=np.float64), requires_grad=True)
    with Tape() as tape:
        y = f(x64)
    _scalar(y)
    if y._node is None:
        g_ad = np.zeros(x64.shape)
    else:
        g_ad = tape.backward(y).get(x64, np.zeros(x64.shape))
    probe = Tensor(x64.data.copy())
    g_fd = numeric_grad(lambda: f(probe), probe, eps)
    return float(relative_error(g_ad, g_fd).max()) if g_ad.size else 0.0


def check_module_grads(loss_fn: Callable[..., Tensor], module: Module, inputs: Sequence[Tensor],
                       eps: float = 1e-3) -> dict[str, float]:
    """Gradient check for every parameter of ``module`` and every input.

    ``loss_fn(module, *inputs)`` must return a scalar. The module and inputs are
    copied to float64 first; the caller's objects are untouched. Returns the max
    relative error keyed by parameter name (inputs as ``input.<i>``).
    """
    m64 = module.astype(np.float64)
    xs = [Tensor(np.array(x.data, dtype=np.float64), requires_grad=True) for x in inputs]
    params = dict(m64.named_parameters())
    with Tape() as tape:
        y = loss_fn(m64, *xs)
    _scalar(y)
    grads = tape.backward(y)

    errors = {}
    targets = list(params.items()) + [(f"input.{i}", x) for i, x in enumerate(xs)]
    for name, t in targets:
        g_ad = grads.get(t, np.zeros(t.shape))
        g_fd = numeric_grad(lambda: loss_fn(m64, *xs), t, eps)
        errors[name] = float(relative_error(g_ad, g_fd).max()) if t.size else 0.0
    return errors
