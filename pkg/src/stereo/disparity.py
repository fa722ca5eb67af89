"""Disparity maps tagged with their scale."""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..shared.errors import ShapeError
from ..tensor import Tensor


@dataclass(frozen=True)
class DisparityMap:
    """Single-channel disparity at 1/scale resolution, values already divided by scale."""

    tensor: Tensor
    scale: int = 1
    valid: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.tensor.shape[1] != 1:
            raise ShapeError(f"disparity maps have one channel, got {self.tensor.shape[1]}")
        if self.scale < 1:
            raise ShapeError(f"scale must be a positive integer, got {self.scale}")
        if self.valid is not None and self.valid.shape != self.tensor.shape:
            raise ShapeError(f"valid mask shaped {self.valid.shape}, disparity {self.tensor.shape}")

    @classmethod
    def from_array(cls, values, scale: int = 1, valid: Optional[np.ndarray] = None, dtype=np.float32) -> "DisparityMap":
        array = np.asarray(values, dtype=dtype)
        while array.ndim < 4:
            array = array[np.newaxis]
        mask = None
        if valid is not None:
            mask = np.asarray(valid, dtype=bool).reshape(array.shape)
        return cls(Tensor(array, dtype=dtype), scale=scale, valid=mask)

    @property
    def values(self) -> np.ndarray:
        return self.tensor.data

    @property
    def shape(self):
        return self.tensor.shape

    def valid_mask(self) -> np.ndarray:
        if self.valid is None:
            return np.ones(self.tensor.shape, dtype=bool)
        return self.valid

    def full_resolution(self) -> np.ndarray:
        """Nearest-upsampled values times scale, for display."""
        values = self.values * self.scale
        if self.scale == 1:
            return values
        return np.repeat(np.repeat(values, self.scale, axis=2), self.scale, axis=3)
