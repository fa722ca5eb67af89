"""Minimal dense-tensor engine with reverse-mode automatic differentiation."""

from .core import Tape, TapeRecord, Tensor, assert_finite, backward, constant, record, zeros
from .gradcheck import gradcheck, random_tensor
from .ops import (
    absolute,
    add,
    channel_slice,
    concat_channels,
    conv2d,
    mul,
    relu,
    scale,
    sub,
    sum_all,
    transpose_conv2d,
    upsample_nearest,
)
from .params import ParameterStore

__all__ = [
    "Tape",
    "TapeRecord",
    "Tensor",
    "assert_finite",
    "backward",
    "constant",
    "record",
    "zeros",
    "gradcheck",
    "random_tensor",
    "absolute",
    "add",
    "channel_slice",
    "concat_channels",
    "conv2d",
    "mul",
    "relu",
    "scale",
    "sub",
    "sum_all",
    "transpose_conv2d",
    "upsample_nearest",
    "ParameterStore",
]
