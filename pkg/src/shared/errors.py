"""Exception hierarchy for MSFNet."""

from typing import Optional


class MsfnetError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(MsfnetError, ValueError):
    """Tensor extents do not line up for an operation."""


class ConfigurationError(MsfnetError, ValueError):
    """A spec or config is invalid, or a layer would produce an empty output."""

    def __init__(self, message: str, layer: Optional[str] = None):
        self.layer = layer
        if layer:
            message = f"{layer}: {message}"
        super().__init__(message)


class UnsupportedError(MsfnetError, ValueError):
    """A well-formed request outside what the kernels implement."""


class NonFiniteError(MsfnetError, FloatingPointError):
    """NaN or Inf appeared in a forward value, gradient or loss."""

    def __init__(
        self,
        message: str,
        layer: Optional[str] = None,
        iteration: Optional[int] = None,
    ):
        self.layer = layer
        self.iteration = iteration
        parts = []
        if iteration is not None:
            parts.append(f"iteration {iteration}")
        if layer:
            parts.append(layer)
        prefix = ", ".join(parts)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class TapeError(MsfnetError, RuntimeError):
    """Backward was requested for something the tape never recorded."""


class FormatError(MsfnetError, ValueError):
    """A file on disk does not follow its declared format."""

    def __init__(self, message: str, path: Optional[str] = None):
        self.path = path
        if path:
            message = f"{path}: {message}"
        super().__init__(message)


class EmptyMaskError(MsfnetError, ValueError):
    """A loss or metric was asked to average over zero valid pixels."""
