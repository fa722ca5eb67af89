"""Stereo-specific differentiable operators: 1D correlation, horizontal warp, guidance error map."""

import numpy as np

from ..shared.errors import ShapeError, UnsupportedError
from ..shared.schemas import CorrSpec
from ..tensor import Tensor, absolute, record, sub
from .disparity import DisparityMap


def correlation_1d(left: Tensor, right: Tensor, spec: CorrSpec) -> Tensor:
    """One-sided horizontal correlation, channel d = mean_c left(x) * right(x - d).

    Positions with x - d < 0 are zero.
    """
    if spec.patch_size != 1 or spec.stride1 != 1 or spec.stride2 != 1:
        raise UnsupportedError(
            f"correlation supports k=1, s1=s2=1 only, got k={spec.patch_size} "
            f"s1={spec.stride1} s2={spec.stride2}"
        )
    if left.shape != right.shape:
        raise ShapeError(f"correlation_1d: left {left.shape} vs right {right.shape}")
    n, c, h, w = left.shape
    max_d = spec.max_displacement
    if max_d >= w:
        raise ShapeError(f"correlation_1d: max displacement {max_d} must be below width {w}")

    l, r = left.data, right.data
    dtype = np.result_type(l.dtype, r.dtype)
    inv_c = dtype.type(1.0 / c)
    out = np.zeros((n, max_d + 1, h, w), dtype=dtype)
    for d in range(max_d + 1):
        out[:, d, :, d:] = (l[:, :, :, d:] * r[:, :, :, : w - d]).sum(axis=1) * inv_c

    def rule(g: np.ndarray):
        gl = np.zeros_like(l, dtype=dtype)
        gr = np.zeros_like(r, dtype=dtype)
        for d in range(max_d + 1):
            gd = g[:, d : d + 1, :, d:] * inv_c
            gl[:, :, :, d:] += gd * r[:, :, :, : w - d]
            gr[:, :, :, : w - d] += gd * l[:, :, :, d:]
        return gl, gr

    return record("correlation_1d", out, (left, right), rule)


def warp_horizontal(source: Tensor, disparity: DisparityMap) -> Tensor:
    """Bilinear sample of source at (x - d(x, y), y), coordinates clamped to [0, W-1]."""
    disp = disparity.tensor
    n, c, h, w = source.shape
    if (disp.shape[0], disp.shape[2], disp.shape[3]) != (n, h, w):
        raise ShapeError(f"warp_horizontal: source {source.shape} vs disparity {disp.shape}")

    src = source.data
    dtype = np.result_type(src.dtype, disp.dtype)
    columns = np.arange(w, dtype=dtype).reshape(1, 1, 1, w)
    raw = columns - disp.data.astype(dtype, copy=False)
    xs = np.clip(raw, 0, w - 1)
    inside = (raw > 0) & (raw < w - 1)
    x0 = np.floor(xs).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    frac = (xs - x0).astype(dtype)

    idx0 = np.broadcast_to(x0, (n, c, h, w))
    idx1 = np.broadcast_to(x1, (n, c, h, w))
    v0 = np.take_along_axis(src, idx0, axis=3)
    v1 = np.take_along_axis(src, idx1, axis=3)
    out = (1 - frac) * v0 + frac * v1

    def rule(g: np.ndarray):
        # scatter back into source rows with bincount on flattened row offsets
        rows = (np.arange(n * c * h, dtype=np.int64) * w).reshape(n, c, h, 1)
        size = n * c * h * w
        weights0 = (g * (1 - frac)).reshape(-1)
        weights1 = (g * frac).reshape(-1)
        gsrc = np.bincount((rows + idx0).reshape(-1), weights=weights0, minlength=size)
        gsrc += np.bincount((rows + idx1).reshape(-1), weights=weights1, minlength=size)
        gsrc = gsrc.reshape(n, c, h, w).astype(src.dtype, copy=False)
        # d out / d d = -(v1 - v0) where the sample coordinate is not clamped
        gdisp = -(g * (v1 - v0)).sum(axis=1, keepdims=True) * inside
        return gsrc, gdisp.astype(disp.dtype, copy=False)

    return record("warp_horizontal", out.astype(dtype, copy=False), (source, disp), rule)


def error_map(left_feature: Tensor, warped_feature: Tensor) -> Tensor:
    """|F_L - F_w| elementwise; derivative at zero difference is 0."""
    if left_feature.shape != warped_feature.shape:
        raise ShapeError(f"error_map: {left_feature.shape} vs {warped_feature.shape}")
    return absolute(sub(left_feature, warped_feature))
