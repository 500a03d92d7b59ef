"""Shared test utilities."""
import numpy as np

from teanet.core import ops
from teanet.core.autograd import Tensor


def projection_loss(forward, seed=0):
    """``sum(R * forward(m, x))`` with a fixed Gaussian ``R``.

    Batch norm makes ``sum(y)`` constant, so gradient checks need a generic
    linear functional of the output instead.
    """
    cache = {}

    def loss(m, *xs):
        y = forward(m, *xs)
        if y.shape not in cache:
            cache[y.shape] = np.random.default_rng(seed).standard_normal(y.shape)
        return ops.sum_all(ops.mul(y, Tensor(cache[y.shape])))

    return loss


def video(rng, shape, dtype=np.float64, requires_grad=False):
    return Tensor(rng.standard_normal(shape).astype(dtype), requires_grad=requires_grad)
