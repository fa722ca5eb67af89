"""Portable float map (grayscale "Pf") reader and writer."""

from pathlib import Path
from typing import BinaryIO, Union

import numpy as np

from ..shared.errors import FormatError, UnsupportedError
from ..tensor import Tensor

PathLike = Union[str, Path]


def _header_line(handle: BinaryIO, path: str) -> str:
    line = handle.readline()
    if not line:
        raise FormatError("truncated header", path=path)
    try:
        return line.decode("ascii").strip()
    except UnicodeDecodeError:
        raise FormatError("header is not ASCII", path=path) from None


def load_pfm(path: PathLike) -> Tensor:
    """Read a single-channel PFM as a 1×1×H×W float32 tensor, top row first."""
    path = str(path)
    with open(path, "rb") as handle:
        magic = _header_line(handle, path)
        if magic == "PF":
            raise UnsupportedError(f"{path}: colour PFM is not supported, expected single-channel 'Pf'")
        if magic != "Pf":
            raise FormatError(f"bad magic {magic!r}", path=path)

        dims = _header_line(handle, path).split()
        try:
            width, height = (int(v) for v in dims)
        except ValueError:
            raise FormatError(f"bad dimensions {' '.join(dims)!r}", path=path) from None
        if width <= 0 or height <= 0:
            raise FormatError(f"bad dimensions {width}x{height}", path=path)

        try:
            scale = float(_header_line(handle, path))
        except ValueError:
            raise FormatError("bad scale", path=path) from None
        if scale == 0 or not np.isfinite(scale):
            raise FormatError("scale must be nonzero", path=path)

        payload = handle.read()

    expected = width * height * 4
    if len(payload) < expected:
        raise FormatError(f"truncated payload: {len(payload)} of {expected} bytes", path=path)
    dtype = np.dtype("<f4") if scale < 0 else np.dtype(">f4")
    rows = np.frombuffer(payload[:expected], dtype=dtype).reshape(height, width)
    values = np.flipud(rows).astype(np.float32)
    return Tensor(values.reshape(1, 1, height, width))


def save_pfm(values: Union[Tensor, np.ndarray], path: PathLike) -> None:
    """Write a single-channel map as little-endian PFM, bottom row first."""
    array = values.data if isinstance(values, Tensor) else np.asarray(values)
    if array.ndim < 2 or any(extent != 1 for extent in array.shape[:-2]):
        raise FormatError(f"PFM holds one 2-D channel, got shape {array.shape}", path=str(path))
    array = array.reshape(array.shape[-2:])
    height, width = array.shape
    header = f"Pf\n{width} {height}\n-1.0\n".encode("ascii")
    raster = np.ascontiguousarray(np.flipud(array.astype("<f4")))
    with open(path, "wb") as handle:
        handle.write(header)
        handle.write(raster.tobytes())
