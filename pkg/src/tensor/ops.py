"""Differentiable primitives: (transposed) convolution, ReLU, arithmetic, concatenation.

Convolutions are im2col over a strided window view followed by one tensordot;
the scatter back (input gradient, transposed convolution) loops over the k×k
kernel offsets only.
"""

from typing import List, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..shared.errors import ConfigurationError, ShapeError
from ..shared.schemas import ConvSpec
from .core import Tensor, record


# =============================================================================
# Kernels
# =============================================================================


def _pad(x: np.ndarray, padding: int) -> np.ndarray:
    if padding == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))


def _windows(xp: np.ndarray, kernel: int, stride: int, out_h: int, out_w: int) -> np.ndarray:
    """(N, C, out_h, out_w, k, k) view of the padded input."""
    win = sliding_window_view(xp, (kernel, kernel), axis=(2, 3))
    return win[:, :, : stride * (out_h - 1) + 1 : stride, : stride * (out_w - 1) + 1 : stride]


def conv_forward_kernel(x: np.ndarray, w: np.ndarray, stride: int, padding: int) -> np.ndarray:
    """x (N, C, H, W), w (O, C, k, k) -> (N, O, Ho, Wo)."""
    k = w.shape[2]
    out_h = (x.shape[2] + 2 * padding - k) // stride + 1
    out_w = (x.shape[3] + 2 * padding - k) // stride + 1
    cols = _windows(_pad(x, padding), k, stride, out_h, out_w)
    out = np.tensordot(cols, w, axes=([1, 4, 5], [1, 2, 3]))
    return np.ascontiguousarray(out.transpose(0, 3, 1, 2))


def conv_weight_grad_kernel(x: np.ndarray, g: np.ndarray, kernel: int, stride: int, padding: int) -> np.ndarray:
    """dL/dw for conv_forward_kernel given upstream g (N, O, Ho, Wo) -> (O, C, k, k)."""
    cols = _windows(_pad(x, padding), kernel, stride, g.shape[2], g.shape[3])
    return np.tensordot(g, cols, axes=([0, 2, 3], [0, 2, 3]))


def conv_input_grad_kernel(
    g: np.ndarray, w: np.ndarray, stride: int, padding: int, in_h: int, in_w: int
) -> np.ndarray:
    """dL/dx for conv_forward_kernel; also the transposed-convolution forward."""
    n, _, out_h, out_w = g.shape
    channels, k = w.shape[1], w.shape[2]
    dcols = np.tensordot(g, w, axes=([1], [0]))  # N, Ho, Wo, C, k, k
    dxp = np.zeros((n, channels, in_h + 2 * padding, in_w + 2 * padding), dtype=dcols.dtype)
    h_span = stride * (out_h - 1) + 1
    w_span = stride * (out_w - 1) + 1
    for i in range(k):
        for j in range(k):
            dxp[:, :, i : i + h_span : stride, j : j + w_span : stride] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    return np.ascontiguousarray(dxp[:, :, padding : padding + in_h, padding : padding + in_w])


# =============================================================================
# Validation
# =============================================================================


def _check_conv_args(
    op: str, input: Tensor, weights: Tensor, bias: Optional[Tensor], spec: ConvSpec, name: Optional[str]
) -> Tuple[int, int]:
    layer = name or op
    if input.shape[1] != spec.in_channels:
        raise ShapeError(
            f"{layer}: input has {input.shape[1]} channels, spec expects {spec.in_channels}"
        )
    if weights.shape != spec.weight_shape:
        raise ShapeError(f"{layer}: weights shaped {weights.shape}, expected {spec.weight_shape}")
    if bias is not None and bias.shape != (1, spec.out_channels, 1, 1):
        raise ShapeError(f"{layer}: bias shaped {bias.shape}, expected (1, {spec.out_channels}, 1, 1)")
    out_h, out_w = spec.output_hw(input.shape[2], input.shape[3])
    if out_h <= 0 or out_w <= 0:
        raise ConfigurationError(
            f"input {input.shape[2]}x{input.shape[3]} gives empty output {out_h}x{out_w}", layer=layer
        )
    return out_h, out_w


def _same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


# =============================================================================
# Convolutions
# =============================================================================


def conv2d(
    input: Tensor, weights: Tensor, bias: Optional[Tensor], spec: ConvSpec, name: Optional[str] = None
) -> Tensor:
    """Cross-correlation with weights (out, in, k, k); activation is the caller's job."""
    if spec.transposed:
        raise ConfigurationError("conv2d needs a forward spec", layer=name)
    _check_conv_args("conv2d", input, weights, bias, spec, name)
    x, w = input.data, weights.data
    out = conv_forward_kernel(x, w, spec.stride, spec.padding)
    if bias is not None:
        out += bias.data

    def rule(g: np.ndarray):
        dx = conv_input_grad_kernel(g, w, spec.stride, spec.padding, x.shape[2], x.shape[3])
        dw = conv_weight_grad_kernel(x, g, spec.kernel, spec.stride, spec.padding)
        db = g.sum(axis=(0, 2, 3)).reshape(1, -1, 1, 1) if bias is not None else None
        return dx, dw, db

    inputs = (input, weights) if bias is None else (input, weights, bias)
    return record("conv2d", out, inputs, rule)


def transpose_conv2d(
    input: Tensor, weights: Tensor, bias: Optional[Tensor], spec: ConvSpec, name: Optional[str] = None
) -> Tensor:
    """Adjoint of conv2d: weights (in, out, k, k) shared with the matching forward conv."""
    if not spec.transposed:
        raise ConfigurationError("transpose_conv2d needs a transposed spec", layer=name)
    out_h, out_w = _check_conv_args("transpose_conv2d", input, weights, bias, spec, name)
    x, w = input.data, weights.data
    out = conv_input_grad_kernel(x, w, spec.stride, spec.padding, out_h, out_w)
    if bias is not None:
        out += bias.data

    def rule(g: np.ndarray):
        dx = conv_forward_kernel(g, w, spec.stride, spec.padding)
        dw = conv_weight_grad_kernel(g, x, spec.kernel, spec.stride, spec.padding)
        db = g.sum(axis=(0, 2, 3)).reshape(1, -1, 1, 1) if bias is not None else None
        return dx, dw, db

    inputs = (input, weights) if bias is None else (input, weights, bias)
    return record("transpose_conv2d", out, inputs, rule)


# =============================================================================
# Elementwise
# =============================================================================


def relu(input: Tensor) -> Tensor:
    """max(0, x); the derivative at exactly 0 is 0. NaN passes through."""
    x = input.data
    mask = x > 0
    return record("relu", np.maximum(x, 0).astype(x.dtype), (input,), lambda g: (g * mask,))


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("add", a, b)
    return record("add", a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("sub", a, b)
    return record("sub", a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("mul", a, b)
    x, y = a.data, b.data
    return record("mul", x * y, (a, b), lambda g: (g * y, g * x))


def scale(input: Tensor, factor: float) -> Tensor:
    x = input.data
    f = x.dtype.type(factor)
    return record("scale", x * f, (input,), lambda g: (g * f,))


def absolute(input: Tensor) -> Tensor:
    """|x|; the derivative at exactly 0 is 0."""
    x = input.data
    sign = np.sign(x)
    return record("absolute", np.abs(x), (input,), lambda g: (g * sign,))


def sum_all(input: Tensor) -> Tensor:
    """Sum of every element as a 1×1×1×1 scalar."""
    x = input.data
    total = x.sum(dtype=x.dtype).reshape(1, 1, 1, 1)
    return record("sum_all", total, (input,), lambda g: (np.full_like(x, g.reshape(-1)[0]),))


# =============================================================================
# Layout
# =============================================================================


def concat_channels(parts: Sequence[Tensor], names: Optional[Sequence[str]] = None) -> Tensor:
    """Stack along C in argument order."""
    if not parts:
        raise ShapeError("concat_channels needs at least one part")
    labels: List[str] = list(names) if names is not None else [f"part {i}" for i in range(len(parts))]
    n, _, h, w = parts[0].shape
    for i, part in enumerate(parts[1:], start=1):
        if (part.shape[0], part.shape[2], part.shape[3]) != (n, h, w):
            raise ShapeError(
                f"concat_channels: {labels[0]} is {n}x{h}x{w} but {labels[i]} is "
                f"{part.shape[0]}x{part.shape[2]}x{part.shape[3]}"
            )
    if len(parts) == 1:
        return parts[0]

    dtype = np.result_type(*(p.dtype for p in parts))
    out = np.concatenate([p.data.astype(dtype, copy=False) for p in parts], axis=1)
    bounds = np.cumsum([0] + [p.shape[1] for p in parts])

    def rule(g: np.ndarray):
        return tuple(g[:, bounds[i] : bounds[i + 1]] for i in range(len(parts)))

    return record("concat_channels", out, tuple(parts), rule)


def channel_slice(input: Tensor, start: int, stop: int) -> Tensor:
    x = input.data
    if not 0 <= start < stop <= x.shape[1]:
        raise ShapeError(f"channel_slice [{start}:{stop}] outside {x.shape[1]} channels")

    def rule(g: np.ndarray):
        full = np.zeros_like(x)
        full[:, start:stop] = g
        return (full,)

    return record("channel_slice", x[:, start:stop].copy(), (input,), rule)


def upsample_nearest(input: Tensor, factor: int) -> Tensor:
    """Repeat every pixel factor×factor times."""
    if factor < 1:
        raise ConfigurationError(f"upsample factor must be positive, got {factor}")
    x = input.data
    if factor == 1:
        return input
    out = np.repeat(np.repeat(x, factor, axis=2), factor, axis=3)
    n, c, h, w = x.shape

    def rule(g: np.ndarray):
        return (g.reshape(n, c, h, factor, w, factor).sum(axis=(3, 5)),)

    return record("upsample_nearest", out, (input,), rule)
