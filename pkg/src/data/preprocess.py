"""Training-set preprocessing: the large-disparity filter and random crops."""

from typing import Sequence, Union

import numpy as np

from ..shared.errors import ConfigurationError, EmptyMaskError, ShapeError
from ..shared.schemas import DatasetFilterRule
from ..stereo.disparity import DisparityMap
from ..tensor import Tensor
from .sample import StereoSample


def random_crop(
    sample: StereoSample, crop_h: int, crop_w: int, seed: Union[int, Sequence[int]]
) -> StereoSample:
    """Cut the same window out of both images, the disparity and every mask."""
    if crop_h % 64 or crop_w % 64:
        raise ConfigurationError(f"crop {crop_w}x{crop_h} must be divisible by 64")
    if crop_h > sample.height or crop_w > sample.width:
        raise ShapeError(f"crop {crop_w}x{crop_h} larger than image {sample.width}x{sample.height}")
    if (crop_h, crop_w) == (sample.height, sample.width):
        return sample

    rng = np.random.default_rng(seed)
    top = int(rng.integers(0, sample.height - crop_h + 1))
    left = int(rng.integers(0, sample.width - crop_w + 1))
    window = (slice(None), slice(None), slice(top, top + crop_h), slice(left, left + crop_w))

    def cut(array: np.ndarray) -> np.ndarray:
        return np.ascontiguousarray(array[window])

    occlusion = sample.occlusion_mask
    return StereoSample(
        left=Tensor(cut(sample.left.data)),
        right=Tensor(cut(sample.right.data)),
        gt_disparity=DisparityMap(Tensor(cut(sample.gt_disparity.values))),
        valid_mask=cut(sample.valid_mask),
        occlusion_mask=None if occlusion is None else cut(occlusion),
        name=sample.name,
    )


def large_disparity_fraction(sample: StereoSample, threshold: float) -> float:
    valid = sample.valid_mask
    if not valid.any():
        raise EmptyMaskError(f"{sample.name or 'sample'}: no valid ground truth")
    values = sample.gt_disparity.values[valid]
    return float(np.count_nonzero(values > threshold) / values.size)


def apply_filter(sample: StereoSample, rule: DatasetFilterRule) -> bool:
    """True to keep; rejects when strictly more than the threshold fraction is too large."""
    return large_disparity_fraction(sample, rule.disparity_threshold) <= rule.fraction_threshold
