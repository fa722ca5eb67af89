"""Stereo samples and batching."""

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..shared.errors import ShapeError
from ..stereo.disparity import DisparityMap
from ..tensor import Tensor


@dataclass
class StereoSample:
    """Rectified pair with ground truth; arrays are N×C×H×W."""

    left: Tensor
    right: Tensor
    gt_disparity: DisparityMap
    valid_mask: np.ndarray
    occlusion_mask: Optional[np.ndarray] = None
    name: str = ""

    def __post_init__(self):
        if self.left.shape != self.right.shape:
            raise ShapeError(f"left {self.left.shape} vs right {self.right.shape}")
        n, _, h, w = self.left.shape
        if self.gt_disparity.shape != (n, 1, h, w):
            raise ShapeError(f"disparity {self.gt_disparity.shape} does not cover images {self.left.shape}")
        if self.valid_mask.shape != (n, 1, h, w):
            raise ShapeError(f"valid mask {self.valid_mask.shape} does not cover images {self.left.shape}")
        if self.occlusion_mask is not None and self.occlusion_mask.shape != (n, 1, h, w):
            raise ShapeError(f"occlusion mask {self.occlusion_mask.shape} does not cover images {self.left.shape}")

    @property
    def height(self) -> int:
        return self.left.shape[2]

    @property
    def width(self) -> int:
        return self.left.shape[3]

    @property
    def ground_truth(self) -> DisparityMap:
        """Disparity with the validity mask attached."""
        return DisparityMap(self.gt_disparity.tensor, scale=1, valid=self.valid_mask)

    def non_occluded(self) -> np.ndarray:
        if self.occlusion_mask is None:
            return self.valid_mask
        return self.valid_mask & ~self.occlusion_mask


def collate(samples: Sequence[StereoSample]) -> StereoSample:
    """Stack samples along the batch axis."""
    if not samples:
        raise ShapeError("cannot collate an empty batch")
    if len(samples) == 1:
        return samples[0]
    occlusion = None
    if all(s.occlusion_mask is not None for s in samples):
        occlusion = np.concatenate([s.occlusion_mask for s in samples])
    return StereoSample(
        left=Tensor(np.concatenate([s.left.data for s in samples])),
        right=Tensor(np.concatenate([s.right.data for s in samples])),
        gt_disparity=DisparityMap(Tensor(np.concatenate([s.gt_disparity.values for s in samples]))),
        valid_mask=np.concatenate([s.valid_mask for s in samples]),
        occlusion_mask=occlusion,
        name=",".join(s.name for s in samples),
    )
