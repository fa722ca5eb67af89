"""Multi-scale Features Module."""

from .module import (
    COMPRESSED_LEFT,
    COMPRESSED_RIGHT,
    DETAILS_LEFT,
    DETAILS_RIGHT,
    LOCAL_PRIOR,
    MsfmOutputs,
    build_msfm,
    msfm_forward,
    msfm_parameter_count,
    register_images,
)

__all__ = [
    "COMPRESSED_LEFT",
    "COMPRESSED_RIGHT",
    "DETAILS_LEFT",
    "DETAILS_RIGHT",
    "LOCAL_PRIOR",
    "MsfmOutputs",
    "build_msfm",
    "msfm_forward",
    "msfm_parameter_count",
    "register_images",
]
