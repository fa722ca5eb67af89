"""End-point error, 3-pixel error and D1 outlier rate."""

from typing import Optional

import numpy as np

from ..shared.errors import EmptyMaskError, ShapeError
from ..shared.schemas import SampleMetrics
from .disparity import DisparityMap

BAD_PIXEL_THRESHOLD = 3.0
D1_RELATIVE_THRESHOLD = 0.05


def _errors(pred: DisparityMap, gt: DisparityMap, valid: Optional[np.ndarray], metric: str) -> np.ndarray:
    if pred.shape != gt.shape:
        raise ShapeError(f"{metric}: prediction {pred.shape} vs ground truth {gt.shape}")
    mask = gt.valid_mask() if valid is None else np.asarray(valid, dtype=bool).reshape(gt.shape)
    if not mask.any():
        raise EmptyMaskError(f"{metric}: no valid pixels")
    diff = np.abs(pred.values.astype(np.float64) - gt.values.astype(np.float64))
    return diff[mask]


def epe(pred: DisparityMap, gt: DisparityMap, valid: Optional[np.ndarray] = None) -> float:
    """Mean |P - G| over valid pixels."""
    return float(_errors(pred, gt, valid, "epe").mean())


def three_px_error(pred: DisparityMap, gt: DisparityMap, valid: Optional[np.ndarray] = None) -> float:
    """Percentage of valid pixels with |P - G| > 3; exactly 3 counts as correct."""
    errors = _errors(pred, gt, valid, "three_px_error")
    return float(100.0 * np.count_nonzero(errors > BAD_PIXEL_THRESHOLD) / errors.size)


def d1_error(pred: DisparityMap, gt: DisparityMap, valid: Optional[np.ndarray] = None) -> float:
    """Percentage of valid pixels wrong by more than 3 px and more than 5% of the true disparity."""
    mask = gt.valid_mask() if valid is None else np.asarray(valid, dtype=bool).reshape(gt.shape)
    errors = _errors(pred, gt, mask, "d1_error")
    truth = np.abs(gt.values.astype(np.float64))[mask]
    outliers = (errors > BAD_PIXEL_THRESHOLD) & (errors > D1_RELATIVE_THRESHOLD * truth)
    return float(100.0 * np.count_nonzero(outliers) / errors.size)


def sample_metrics(
    index: int,
    pred: DisparityMap,
    gt: DisparityMap,
    occlusion: Optional[np.ndarray] = None,
) -> SampleMetrics:
    """All-pixel metrics, plus non-occluded ones when an occlusion mask is known."""
    valid = gt.valid_mask()
    metrics = SampleMetrics(
        index=index,
        epe=epe(pred, gt, valid),
        three_px=three_px_error(pred, gt, valid),
        d1=d1_error(pred, gt, valid),
    )
    if occlusion is not None:
        visible = valid & ~np.asarray(occlusion, dtype=bool).reshape(valid.shape)
        if visible.any():
            metrics.epe_noc = epe(pred, gt, visible)
            metrics.three_px_noc = three_px_error(pred, gt, visible)
    return metrics
