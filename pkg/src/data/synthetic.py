"""Random-dot stereo pairs with exact ground truth."""

from typing import Sequence, Tuple, Union

import numpy as np

from ..shared.errors import ConfigurationError
from ..stereo.disparity import DisparityMap
from ..tensor import Tensor
from .sample import StereoSample

Seed = Union[int, Sequence[int]]


def _layers(
    rng: np.random.Generator, height: int, width: int, max_disp: int, shape_count: int
) -> np.ndarray:
    """Integer left-view disparity: a background plane plus rectangles, nearer painted last."""
    base = int(rng.integers(0, max_disp // 2 + 1))
    disparity = np.full((height, width), base, dtype=np.int64)

    shapes = []
    for _ in range(shape_count):
        h = int(rng.integers(max(1, height // 8), max(2, height // 2) + 1))
        w = int(rng.integers(max(1, width // 8), max(2, width // 3) + 1))
        top = int(rng.integers(0, height - h + 1))
        left = int(rng.integers(0, width - w + 1))
        d = int(rng.integers(base + 1, max_disp + 1)) if max_disp > base else base
        shapes.append((d, top, left, h, w))

    for d, top, left, h, w in sorted(shapes, key=lambda s: s[0]):
        disparity[top : top + h, left : left + w] = d
    return disparity


def forward_map(
    left: np.ndarray, disparity: np.ndarray, fill: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """Render the right view by moving each left pixel x to x - d, nearer disparity winning.

    Returns the right image (3×H×W) and the left-view occlusion mask: pixels
    that leave the frame or are hidden behind a nearer surface.
    """
    height, width = disparity.shape
    rows, cols = np.indices((height, width))
    target = cols - disparity
    in_frame = target >= 0

    depth = np.full((height, width), -1, dtype=np.int64)
    np.maximum.at(depth, (rows[in_frame], target[in_frame]), disparity[in_frame])

    visible = np.zeros((height, width), dtype=bool)
    visible[in_frame] = depth[rows[in_frame], target[in_frame]] == disparity[in_frame]

    right = fill.copy()
    right[:, rows[visible], target[visible]] = left[:, rows[visible], cols[visible]]
    return right, ~visible


def generate_random_dot(
    seed: Seed,
    height: int,
    width: int,
    max_disp: int,
    shape_count: int = 3,
) -> StereoSample:
    """Random-dot pair: background plane plus shape_count nearer rectangles.

    Deterministic per seed. Disparities are integers so the right view is an
    exact copy of the visible left pixels.
    """
    if height < 1 or width < 1:
        raise ConfigurationError(f"image {width}x{height} is empty")
    if max_disp < 0 or 4 * max_disp >= width:
        raise ConfigurationError(f"max_disp {max_disp} must be below a quarter of the width {width}")
    if shape_count and (height < 2 or width < 3):
        raise ConfigurationError(f"cannot place shapes in a {width}x{height} image")

    rng = np.random.default_rng(seed)
    disparity = _layers(rng, height, width, max_disp, shape_count)
    left = rng.random((3, height, width), dtype=np.float32)
    fill = rng.random((3, height, width), dtype=np.float32)
    right, occluded = forward_map(left, disparity, fill)

    shape = (1, 1, height, width)
    return StereoSample(
        left=Tensor(left[np.newaxis]),
        right=Tensor(right[np.newaxis]),
        gt_disparity=DisparityMap(Tensor(disparity.astype(np.float32).reshape(shape))),
        valid_mask=np.ones(shape, dtype=bool),
        occlusion_mask=occluded.reshape(shape),
        name=f"random_dot_{seed}",
    )
