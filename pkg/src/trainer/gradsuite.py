"""Finite-difference gradient check over every differentiable operator, in float64."""

from typing import Callable, List, Sequence, Tuple

import numpy as np
import structlog

from ..sgrm.module import compute_guidance
from ..shared.schemas import ConvSpec, CorrSpec, GradCheckResult
from ..stereo.disparity import DisparityMap
from ..stereo.losses import l1_loss, multiscale_loss
from ..stereo.ops import correlation_1d, warp_horizontal
from ..tensor import (
    Tensor,
    absolute,
    add,
    channel_slice,
    concat_channels,
    conv2d,
    gradcheck,
    mul,
    random_tensor,
    relu,
    scale,
    sub,
    sum_all,
    transpose_conv2d,
    upsample_nearest,
)

logger = structlog.get_logger()

Case = Tuple[str, Callable[..., Tensor], List[Tensor]]


def _fractional_disparity(rng: np.random.Generator, shape, max_whole: int = 2) -> Tensor:
    # keep sample coordinates away from integers where bilinear interpolation kinks
    whole = rng.integers(0, max_whole + 1, size=shape)
    return Tensor(whole + rng.uniform(0.2, 0.8, size=shape), requires_grad=True, dtype=np.float64)


def _gt(rng: np.random.Generator, shape) -> DisparityMap:
    values = rng.uniform(0.0, 4.0, size=shape)
    valid = rng.random(shape) > 0.2
    return DisparityMap.from_array(values, valid=valid, dtype=np.float64)


def build_cases(seed: int = 0) -> List[Case]:
    rng = np.random.default_rng(seed)

    def t(*shape) -> Tensor:
        return random_tensor(rng, shape)

    conv = ConvSpec(kernel=3, stride=2, padding=1, in_channels=2, out_channels=3)
    deconv = ConvSpec(kernel=4, stride=2, padding=1, in_channels=3, out_channels=2, transposed=True)
    corr = CorrSpec(max_displacement=3)
    gt = _gt(rng, (1, 1, 4, 6))
    gt_full = _gt(rng, (1, 1, 4, 8))

    return [
        ("conv2d", lambda x, w, b: conv2d(x, w, b, conv), [t(1, 2, 5, 6), t(*conv.weight_shape), t(1, 3, 1, 1)]),
        (
            "transpose_conv2d",
            lambda x, w, b: transpose_conv2d(x, w, b, deconv),
            [t(1, 3, 3, 4), t(*deconv.weight_shape), t(1, 2, 1, 1)],
        ),
        ("relu", relu, [t(2, 2, 3, 3)]),
        ("add", add, [t(1, 2, 3, 3), t(1, 2, 3, 3)]),
        ("sub", sub, [t(1, 2, 3, 3), t(1, 2, 3, 3)]),
        ("mul", mul, [t(1, 2, 3, 3), t(1, 2, 3, 3)]),
        ("scale", lambda x: scale(x, -2.5), [t(1, 2, 3, 3)]),
        ("absolute", absolute, [t(1, 2, 3, 3)]),
        ("sum_all", sum_all, [t(1, 2, 3, 3)]),
        ("concat_channels", lambda a, b: concat_channels([a, b]), [t(1, 1, 3, 3), t(1, 2, 3, 3)]),
        ("channel_slice", lambda x: channel_slice(x, 1, 3), [t(1, 4, 3, 3)]),
        ("upsample_nearest", lambda x: upsample_nearest(x, 2), [t(1, 2, 2, 3)]),
        ("correlation_1d", lambda l, r: correlation_1d(l, r, corr), [t(1, 3, 3, 7), t(1, 3, 3, 7)]),
        (
            "warp_horizontal",
            lambda src, d: warp_horizontal(src, DisparityMap(d)),
            [t(1, 2, 3, 8), _fractional_disparity(rng, (1, 1, 3, 8))],
        ),
        (
            "compute_guidance",
            lambda d, fl, fr: compute_guidance(DisparityMap(d), fl, fr),
            [_fractional_disparity(rng, (1, 1, 3, 8)), t(1, 2, 3, 8), t(1, 2, 3, 8)],
        ),
        ("l1_loss", lambda p: l1_loss(DisparityMap(p), gt), [t(1, 1, 4, 6)]),
        (
            "multiscale_loss",
            lambda full, half: multiscale_loss(
                [DisparityMap(half, scale=2), DisparityMap(full)], gt_full, [0.3, 0.7]
            )[0],
            [t(1, 1, 4, 8), t(1, 1, 2, 4)],
        ),
    ]


def run_gradient_suite(
    seed: int = 0, tolerance: float = 1e-5, names: Sequence[str] = ()
) -> List[GradCheckResult]:
    """Check each case; `names` restricts the run to those operators."""
    results = []
    for name, fn, inputs in build_cases(seed):
        if names and name not in names:
            continue
        result = gradcheck(fn, inputs, name=name, tolerance=tolerance, seed=seed)
        logger.debug("Gradient check", op=name, error=result.max_relative_error, passed=result.passed)
        results.append(result)
    return results


def format_table(results: Sequence[GradCheckResult]) -> str:
    lines = [f"{'op':<20} {'max rel error':>14}  status"]
    for r in results:
        lines.append(f"{r.name:<20} {r.max_relative_error:>14.3e}  {'ok' if r.passed else 'FAIL'}")
    return "\n".join(lines)
