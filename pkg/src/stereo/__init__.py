"""Stereo operators, losses and metrics."""

from .disparity import DisparityMap
from .losses import downsample_disparity, equal_weights, l1_loss, multiscale_loss
from .metrics import d1_error, epe, sample_metrics, three_px_error
from .ops import correlation_1d, error_map, warp_horizontal

__all__ = [
    "DisparityMap",
    "downsample_disparity",
    "equal_weights",
    "l1_loss",
    "multiscale_loss",
    "d1_error",
    "epe",
    "sample_metrics",
    "three_px_error",
    "correlation_1d",
    "error_map",
    "warp_horizontal",
]
