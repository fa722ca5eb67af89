"""Skip Connection Hourglass Module."""

from .module import (
    CORRELATION,
    COST_VOLUME,
    CostVolume,
    SchmOutputs,
    build_cost_volume,
    build_cost_volume_layers,
    build_schm,
    prediction_name,
    schm_forward,
)

__all__ = [
    "CORRELATION",
    "COST_VOLUME",
    "CostVolume",
    "SchmOutputs",
    "build_cost_volume",
    "build_cost_volume_layers",
    "build_schm",
    "prediction_name",
    "schm_forward",
]
