"""Parameter containers: modules, convolution kernels, batch norm, linear layers."""
from __future__ import annotations

import copy
from typing import Iterator, Optional

import numpy as np

from .autograd import DEFAULT_DTYPE, Tensor


class Module:
    """Base class with recursive parameter/buffer discovery.

    Parameters are :class:`Tensor` attributes with ``requires_grad``; buffers
    are plain ``np.ndarray`` attributes (e.g. running statistics). Child
    modules may sit in attributes or in lists.
    """

    training = True

    def _children(self):
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield f"{name}.{i}", item

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, value in vars(self).items():
            if isinstance(value, Tensor) and value.requires_grad:
                yield prefix + name, value
        for name, child in self._children():
            yield from child.named_parameters(f"{prefix}{name}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for name, value in vars(self).items():
            if isinstance(value, np.ndarray):
                yield prefix + name, value
        for name, child in self._children():
            yield from child.named_buffers(f"{prefix}{name}.")

    def state(self) -> dict[str, np.ndarray]:
        """Flat name -> array map of parameters followed by buffers."""
        out = {name: p.data for name, p in self.named_parameters()}
        out.update({name: b for name, b in self.named_buffers()})
        return out

    def load_state(self, state: dict) -> None:
        targets = {name: p for name, p in self.named_parameters()}
        buffers = dict(self.named_buffers())
        missing = (set(targets) | set(buffers)) - set(state)
        if missing:
            raise KeyError(f"state is missing entries: {sorted(missing)[:5]}")
        for name, p in targets.items():
            arr = np.asarray(state[name])
            if arr.shape != p.shape:
                raise ValueError(f"{name}: shape {arr.shape} != {p.shape}")
            p.data = arr.astype(p.dtype).copy()
        for name in buffers:
            owner, attr = self._resolve(name)
            setattr(owner, attr, np.asarray(state[name]).astype(buffers[name].dtype).copy())

    def _resolve(self, dotted: str):
        obj = self
        parts = dotted.split(".")
        for part in parts[:-1]:
            obj = obj[int(part)] if isinstance(obj, (list, tuple)) else getattr(obj, part)
        return obj, parts[-1]

    def modules(self) -> Iterator["Module"]:
        """This module and every descendant, depth first."""
        yield self
        for _, child in self._children():
            yield from child.modules()

    def train(self, mode: bool = True) -> "Module":
        self.training = mode
        for _, child in self._children():
            child.train(mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def astype(self, dtype) -> "Module":
        """Deep copy with every parameter and buffer cast to ``dtype``."""
        clone = copy.deepcopy(self)
        for _, p in clone.named_parameters():
            p.data = p.data.astype(dtype)
            p.grad = None
        for name, _ in list(clone.named_buffers()):
            owner, attr = clone._resolve(name)
            setattr(owner, attr, getattr(owner, attr).astype(dtype))
        return clone

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())


def param(data, dtype=DEFAULT_DTYPE) -> Tensor:
    return Tensor(np.asarray(data, dtype=dtype), requires_grad=True)


class ConvKernel(Module):
    """Weights of a (possibly grouped) convolution.

    ``weight`` has shape ``[out, in/groups, kernel_t, kernel_h, kernel_w]``.
    Spatial kernels have ``kernel_t == 1``; temporal kernels have
    ``kernel_h == kernel_w == 1``.
    """

    def __init__(self, out_channels: int, in_channels: int, kernel_t: int = 1,
                 kernel_h: int = 1, kernel_w: int = 1, groups: int = 1,
                 stride: int = 1, pad: int = 0, pad_t: int = 0, bias: bool = False,
                 rng: Optional[np.random.Generator] = None, dtype=DEFAULT_DTYPE):
        if min(out_channels, in_channels, kernel_t, kernel_h, kernel_w, groups, stride) < 1:
            raise ValueError("channel counts, kernel sizes, groups and stride must be positive")
        if pad < 0 or pad_t < 0:
            raise ValueError("padding must be non-negative")
        if out_channels % groups or in_channels % groups:
            raise ValueError(f"groups={groups} must divide in ({in_channels}) and out ({out_channels}) channels")
        self.out_channels = out_channels
        self.in_channels = in_channels
        self.in_channels_per_group = in_channels // groups
        self.groups = groups
        self.kernel_t, self.kernel_h, self.kernel_w = kernel_t, kernel_h, kernel_w
        self.stride = stride
        self.pad = pad
        self.pad_t = pad_t
        shape = (out_channels, self.in_channels_per_group, kernel_t, kernel_h, kernel_w)
        if rng is None:
            w = np.zeros(shape)
        else:
            # fan-in scaled Gaussian
            fan_in = self.in_channels_per_group * kernel_t * kernel_h * kernel_w
            w = rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)
        self.weight = param(w, dtype)
        self.bias = param(np.zeros(out_channels), dtype) if bias else None

    @property
    def depthwise(self) -> bool:
        return self.groups == self.in_channels == self.out_channels

    def set_weights(self, weight, bias=None) -> "ConvKernel":
        weight = np.asarray(weight, dtype=self.weight.dtype).reshape(self.weight.shape)
        self.weight.data = weight.copy()
        if bias is not None:
            if self.bias is None:
                raise ValueError("kernel was built without a bias")
            self.bias.data = np.asarray(bias, dtype=self.bias.dtype).reshape(self.out_channels).copy()
        return self

    def __repr__(self) -> str:
        return (f"ConvKernel({self.in_channels}->{self.out_channels}, k=({self.kernel_t},"
                f"{self.kernel_h},{self.kernel_w}), groups={self.groups}, stride={self.stride})")


def spatial_kernel(c_in: int, c_out: int, size: int, *, groups: int = 1, stride: int = 1,
                   bias: bool = False, rng=None) -> ConvKernel:
    return ConvKernel(c_out, c_in, 1, size, size, groups=groups, stride=stride,
                      pad=(size - 1) // 2, bias=bias, rng=rng)


def temporal_kernel(channels: int, size: int = 3, *, channelwise: bool = True, rng=None) -> ConvKernel:
    return ConvKernel(channels, channels, size, 1, 1, groups=channels if channelwise else 1,
                      pad_t=(size - 1) // 2, rng=rng)


class BatchNorm(Module):
    def __init__(self, channels: int, eps: float = 1e-5, momentum: float = 0.1, dtype=DEFAULT_DTYPE):
        self.channels = channels
        self.eps = eps
        self.momentum = momentum
        self.scale = param(np.ones(channels), dtype)
        self.shift = param(np.zeros(channels), dtype)
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)


class Linear(Module):
    def __init__(self, in_features: int, out_features: int, rng=None, dtype=DEFAULT_DTYPE):
        self.in_features = in_features
        self.out_features = out_features
        if rng is None:
            w = np.zeros((out_features, in_features))
        else:
            w = rng.standard_normal((out_features, in_features)) * np.sqrt(1.0 / in_features)
        self.weight = param(w, dtype)
        self.bias = param(np.zeros(out_features), dtype)
