"""L1 disparity losses and ground-truth pyramids."""

from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..shared.errors import ConfigurationError, EmptyMaskError, ShapeError
from ..tensor import Tensor, absolute, add, constant, mul, scale, sub, sum_all
from .disparity import DisparityMap

MAX_SCALE = 64


def downsample_disparity(gt: DisparityMap, factor: int) -> DisparityMap:
    """Average valid pixels over factor×factor blocks and divide by factor.

    Blocks with no valid pixel come back invalid with value 0.
    """
    if factor < 1 or factor & (factor - 1):
        raise ConfigurationError(f"downsample factor must be a power of two, got {factor}")
    if factor == 1:
        return gt
    n, c, h, w = gt.shape
    if h % factor or w % factor:
        raise ShapeError(f"disparity {h}x{w} is not divisible by {factor}")

    values = gt.values
    mask = gt.valid_mask()
    blocks = (n, c, h // factor, factor, w // factor, factor)
    total = np.where(mask, values, 0).reshape(blocks).sum(axis=(3, 5))
    count = mask.reshape(blocks).sum(axis=(3, 5))
    valid = count > 0
    mean = np.divide(total, np.maximum(count, 1)).astype(values.dtype)
    down = np.where(valid, mean / factor, 0).astype(values.dtype)
    return DisparityMap(Tensor(down, dtype=values.dtype), scale=gt.scale * factor, valid=valid)


def l1_loss(pred: DisparityMap, gt: DisparityMap, valid: Optional[np.ndarray] = None) -> Tensor:
    """Mean |P - G| over valid pixels as a 1×1×1×1 tensor."""
    if pred.shape != gt.shape:
        raise ShapeError(f"l1_loss: prediction {pred.shape} vs ground truth {gt.shape}")
    mask = gt.valid_mask() if valid is None else np.asarray(valid, dtype=bool).reshape(gt.shape)
    count = int(mask.sum())
    if count == 0:
        raise EmptyMaskError("l1_loss: no valid pixels")

    dtype = pred.tensor.dtype
    target = constant(gt.values.astype(dtype, copy=False))
    diff = absolute(sub(pred.tensor, target))
    if count != mask.size:
        diff = mul(diff, constant(mask.astype(dtype)))
    return scale(sum_all(diff), 1.0 / count)


def equal_weights(count: int) -> List[float]:
    """Equal loss weights normalized to sum to 1."""
    return [1.0 / count] * count


def multiscale_loss(
    preds: Sequence[DisparityMap],
    gt_full: DisparityMap,
    weights: Optional[Sequence[float]] = None,
    names: Optional[Sequence[str]] = None,
) -> Tuple[Tensor, Dict[str, float]]:
    """Weighted sum of per-scale L1 losses against downsampled ground truth.

    Returns the scalar loss and the unweighted component per prediction.
    """
    if not preds:
        raise ConfigurationError("multiscale_loss needs at least one prediction")
    if weights is None:
        weights = equal_weights(len(preds))
    if len(weights) != len(preds):
        raise ConfigurationError(f"{len(weights)} loss weights for {len(preds)} predictions")
    labels = list(names) if names is not None else [f"{i}@1/{p.scale}" for i, p in enumerate(preds)]

    pyramid: Dict[int, DisparityMap] = {gt_full.scale: gt_full}
    total: Optional[Tensor] = None
    components: Dict[str, float] = {}
    for label, pred, weight in zip(labels, preds, weights):
        factor = pred.scale // gt_full.scale
        if pred.scale > MAX_SCALE or pred.scale & (pred.scale - 1) or factor * gt_full.scale != pred.scale:
            raise ConfigurationError(f"prediction scale 1/{pred.scale} is not a power of two <= {MAX_SCALE}", layer=label)
        if pred.scale not in pyramid:
            pyramid[pred.scale] = downsample_disparity(gt_full, factor)
        term = l1_loss(pred, pyramid[pred.scale])
        components[label] = term.item()
        weighted = scale(term, weight)
        total = weighted if total is None else add(total, weighted)
    return total, components
