"""Stacked Guidance Residual Module."""

from .module import (
    GrmInputs,
    SgrmOutputs,
    build_grm,
    build_sgrm,
    compute_guidance,
    grm_forward,
    sgrm_forward,
    stack_prefix,
)

__all__ = [
    "GrmInputs",
    "SgrmOutputs",
    "build_grm",
    "build_sgrm",
    "compute_guidance",
    "grm_forward",
    "sgrm_forward",
    "stack_prefix",
]
