"""Shared configuration, schemas, errors and logging for MSFNet."""

from .config import PRESETS, RuntimeSettings, dump_config_file, load_train_config, parse_overrides, settings
from .errors import (
    ConfigurationError,
    EmptyMaskError,
    FormatError,
    MsfnetError,
    NonFiniteError,
    ShapeError,
    TapeError,
    UnsupportedError,
)
from .logs import configure_logging
from .schemas import (
    ConvSpec,
    CorrSpec,
    DatasetFilterRule,
    GradCheckResult,
    IterationRecord,
    LayerKind,
    MetricsReport,
    MsfmConfig,
    SampleMetrics,
    SchmConfig,
    SgrmConfig,
    TrainConfig,
    scale_channels,
)

__all__ = [
    "PRESETS",
    "RuntimeSettings",
    "dump_config_file",
    "load_train_config",
    "parse_overrides",
    "settings",
    "ConfigurationError",
    "EmptyMaskError",
    "FormatError",
    "MsfnetError",
    "NonFiniteError",
    "ShapeError",
    "TapeError",
    "UnsupportedError",
    "configure_logging",
    "ConvSpec",
    "CorrSpec",
    "DatasetFilterRule",
    "GradCheckResult",
    "IterationRecord",
    "LayerKind",
    "MetricsReport",
    "MsfmConfig",
    "SampleMetrics",
    "SchmConfig",
    "SgrmConfig",
    "TrainConfig",
    "scale_channels",
]
