"""8-bit image input and disparity/error visualisation."""

from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from ..shared.errors import ConfigurationError, FormatError
from ..stereo.disparity import DisparityMap
from ..tensor import Tensor

PathLike = Union[str, Path]


def quantize(values: np.ndarray, max_value: float) -> np.ndarray:
    """floor(255 * clamp(v, 0, max) / max + 0.5) as uint8."""
    if not max_value > 0:
        raise ConfigurationError(f"max value must be positive, got {max_value}")
    clamped = np.clip(np.asarray(values, dtype=np.float64), 0.0, max_value)
    return np.floor(255.0 * clamped / max_value + 0.5).astype(np.uint8)


def _write_gray(pixels: np.ndarray, path: PathLike) -> None:
    # Pillow picks the container from the suffix; .pgm is written as binary P5, maxval 255.
    Image.fromarray(pixels, mode="L").save(str(path))


def _single_plane(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values)
    if values.ndim < 2 or any(extent != 1 for extent in values.shape[:-2]):
        raise FormatError(f"expected one 2-D map, got shape {values.shape}")
    return values.reshape(values.shape[-2:])


def export_disparity_image(disparity: DisparityMap, path: PathLike, max_disp: float) -> np.ndarray:
    """Write the full-resolution disparity as an 8-bit grayscale PNG or PGM."""
    pixels = quantize(_single_plane(disparity.full_resolution()), max_disp)
    _write_gray(pixels, path)
    return pixels


def export_error_image(
    pred: DisparityMap, gt: DisparityMap, path: PathLike, max_error: float = 3.0
) -> np.ndarray:
    """|P - G| rendered with the same quantization; invalid pixels are black."""
    error = np.abs(pred.full_resolution() - gt.full_resolution())
    error = np.where(gt.valid_mask(), error, 0.0)
    pixels = quantize(_single_plane(error), max_error)
    _write_gray(pixels, path)
    return pixels


def load_image(path: PathLike) -> Tensor:
    """Read an image as a 1×3×H×W float32 tensor scaled to [0, 1]."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"image not found: {path}")
    try:
        with Image.open(path) as image:
            rgb = np.asarray(image.convert("RGB"), dtype=np.float32) / 255.0
    except UnidentifiedImageError:
        raise FormatError("not a readable image", path=str(path)) from None
    return Tensor(rgb.transpose(2, 0, 1)[np.newaxis])


def save_image(tensor: Tensor, path: PathLike) -> None:
    """Write the first image of a batch (values in [0, 1]) as 8-bit RGB."""
    rgb = np.clip(tensor.data[0].transpose(1, 2, 0), 0.0, 1.0)
    Image.fromarray(np.floor(rgb * 255.0 + 0.5).astype(np.uint8), mode="RGB").save(str(path))
