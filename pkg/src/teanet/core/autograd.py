"""Tensor values and the recording tape used for reverse-mode differentiation.

Operations only record onto a tape while one is active (``with Tape() as tape``)
and at least one input requires a gradient. Outside a tape every op is a plain
numpy computation.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

DEFAULT_DTYPE = np.float32
MAX_RANK = 5

_ACTIVE_TAPES: list["Tape"] = []


class Tensor:
    """Dense float array with optional gradient tracking.

    Video activations use the ``[N, T, C, H, W]`` layout throughout.
    """

    # keeps numpy from hijacking ``ndarray <op> Tensor``
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        if dtype is None:
            if isinstance(data, np.ndarray) and np.issubdtype(data.dtype, np.floating):
                dtype = data.dtype
            else:
                dtype = DEFAULT_DTYPE
        arr = np.ascontiguousarray(data, dtype=dtype)
        if arr.ndim > MAX_RANK:
            raise ValueError(f"tensors are limited to rank {MAX_RANK}, got shape {arr.shape}")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._node: Optional[Node] = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def astype(self, dtype) -> "Tensor":
        return Tensor(self.data.astype(dtype), requires_grad=self.requires_grad)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    # arithmetic sugar; the real implementations live in ``ops``
    def __add__(self, other):
        from . import ops
        return ops.add(self, _wrap(other, self))

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, _wrap(other, self))

    def __rsub__(self, other):
        from . import ops
        return ops.sub(_wrap(other, self), self)

    def __mul__(self, other):
        from . import ops
        if np.isscalar(other):
            return ops.affine(self, float(other), 0.0)
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from . import ops
        return ops.affine(self, -1.0, 0.0)

    def __getitem__(self, index):
        from . import ops
        return ops.getitem(self, index)

    def sum(self):
        from . import ops
        return ops.sum_all(self)

    def reshape(self, *shape):
        from . import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)


def _wrap(value, like: Tensor) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.full(like.shape, value, dtype=like.dtype))


@dataclass(eq=False)
class Node:
    """One recorded operation: inputs, output and a closure mapping the output
    gradient to per-input gradients (``None`` where an input needs none)."""

    op: str
    inputs: Sequence[Tensor]
    output: Tensor
    backward: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]
    saved: dict = field(default_factory=dict)


class Tape:
    """Ordered record of operations, replayed in reverse by :meth:`backward`.

    A tape can be consumed exactly once.
    """

    def __init__(self):
        self.nodes: list[Node] = []
        self._consumed = False
        self._outputs: set[int] = set()

    def __enter__(self) -> "Tape":
        _ACTIVE_TAPES.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _ACTIVE_TAPES.remove(self)

    def record(self, node: Node) -> None:
        if self._consumed:
            raise RuntimeError("cannot record onto a tape that has already been replayed")
        self.nodes.append(node)
        self._outputs.add(id(node.output))

    def __len__(self) -> int:
        return len(self.nodes)

    def backward(self, loss: Tensor, grad_output: Optional[np.ndarray] = None) -> dict:
        """Propagate gradients from ``loss`` back to every leaf that requires one.

        Leaf ``.grad`` buffers are accumulated in place; the returned dict maps
        each such leaf tensor to its gradient from this call.
        """
        if self._consumed:
            raise RuntimeError("backward() called twice on the same tape")
        if id(loss) not in self._outputs:
            raise RuntimeError("backward() on a tensor that was not recorded on this tape")
        if grad_output is None:
            if loss.size != 1:
                raise ValueError(f"backward() needs a scalar loss, got shape {loss.shape}")
            grad_output = np.ones_like(loss.data)
        self._consumed = True

        grads: dict[int, np.ndarray] = {id(loss): np.asarray(grad_output, dtype=loss.dtype)}
        leaves: dict[int, Tensor] = {}
        for node in reversed(self.nodes):
            g = grads.pop(id(node.output), None)
            if g is None:
                continue
            in_grads = node.backward(g)
            for inp, gi in zip(node.inputs, in_grads):
                if gi is None or not inp.requires_grad:
                    continue
                if gi.shape != inp.shape:
                    raise AssertionError(
                        f"{node.op}: gradient shape {gi.shape} != input shape {inp.shape}")
                key = id(inp)
                if key in grads:
                    grads[key] = grads[key] + gi
                else:
                    grads[key] = gi
                if inp._node is None:
                    leaves[key] = inp

        result = {}
        for key, leaf in leaves.items():
            g = grads[key].astype(leaf.dtype, copy=False)
            leaf.grad = g.copy() if leaf.grad is None else leaf.grad + g
            result[leaf] = g
        self.nodes.clear()
        return result


def active_tape() -> Optional[Tape]:
    return _ACTIVE_TAPES[-1] if _ACTIVE_TAPES else None


def make_result(op: str, data: np.ndarray, inputs: Sequence[Tensor], backward) -> Tensor:
    """Wrap ``data`` as an op output, recording it when a tape is listening."""
    out = Tensor(data, dtype=data.dtype)
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        node = Node(op, tuple(inputs), out, backward)
        out._node = node
        tape.record(node)
    return out


def backward(tape: Tape, loss: Tensor) -> dict:
    return tape.backward(loss)
