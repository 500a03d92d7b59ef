"""Minimal dense tensor engine with reverse-mode autodiff."""
from .autograd import Tape, Tensor, backward
from .gradcheck import check_module_grads, grad_check
from .nn import BatchNorm, ConvKernel, Linear, Module, spatial_kernel, temporal_kernel
from .ops import (
    add,
    affine,
    batch_norm2d,
    concat,
    conv2d,
    dropout,
    getitem,
    global_avg_pool_spatial,
    linear,
    max_pool2d,
    mean_axis,
    mul,
    mul_broadcast_channel,
    relu,
    reshape,
    sigmoid,
    softmax_cross_entropy,
    spatial_subsample,
    split_channels,
    sub,
    sum_all,
    temporal_conv1d,
    temporal_conv1d_cw,
    temporal_shift,
)
from .optim import SgdState, cosine_lr, sgd_step

__all__ = [
    "Tape", "Tensor", "backward", "grad_check", "check_module_grads",
    "BatchNorm", "ConvKernel", "Linear", "Module", "spatial_kernel", "temporal_kernel",
    "add", "affine", "batch_norm2d", "concat", "conv2d", "dropout", "getitem",
    "global_avg_pool_spatial", "linear", "max_pool2d", "mean_axis", "mul",
    "mul_broadcast_channel", "relu", "reshape", "sigmoid", "softmax_cross_entropy",
    "spatial_subsample", "split_channels", "sub", "sum_all", "temporal_conv1d",
    "temporal_conv1d_cw", "temporal_shift", "SgdState", "cosine_lr", "sgd_step",
]
