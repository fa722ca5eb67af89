"""Pydantic schemas for MSFNet layer specs, configs and reports."""

import math
from enum import Enum
from fractions import Fraction
from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, computed_field, field_validator, model_validator

from .errors import ConfigurationError


# =============================================================================
# Enums
# =============================================================================


class LayerKind(str, Enum):
    """Node kinds in the layer graph: convolution types plus the stereo ops."""

    CONV = "conv"
    DECONV = "deconv"
    ADD = "add"
    CONCAT = "concat"
    CORR = "corr"
    NEAREST = "nearest"
    WARP = "warp"
    ABSDIFF = "absdiff"
    ZEROS = "zeros"
    INPUT = "input"


# =============================================================================
# Helpers
# =============================================================================


def parse_rational(value: Any) -> float:
    """Accept 0.125, "0.125" or "1/8"."""
    if isinstance(value, str):
        value = value.strip()
        if "/" in value:
            return float(Fraction(value))
    return float(value)


def parse_int_list(value: Any) -> Any:
    """Accept "20000,120000" as well as real lists."""
    if isinstance(value, str):
        value = value.strip()
        if not value:
            return []
        return [int(v) for v in value.split(",") if v.strip()]
    return value


def parse_float_list(value: Any) -> Any:
    if isinstance(value, str):
        value = value.strip()
        if not value or value.lower() == "none":
            return None
        return [float(v) for v in value.split(",") if v.strip()]
    return value


# Narrowest full-width layer in the network (the compressed-feature convs).
SMALLEST_TABLE_CHANNELS = 16


def scale_channels(channels: int, width_multiplier: float) -> int:
    """Scale a full-width channel count, rounding up.

    Raises ConfigurationError when the result would be below 2.
    """
    ratio = Fraction(width_multiplier).limit_denominator(4096)
    scaled = math.ceil(channels * ratio)
    if scaled < 2:
        raise ConfigurationError(
            f"width multiplier {width_multiplier} collapses {channels} channels to {scaled}"
        )
    return scaled


# =============================================================================
# Layer Specs
# =============================================================================


class ConvSpec(BaseModel):
    """Kernel, stride, padding and channels of one (de)convolution layer."""

    model_config = ConfigDict(frozen=True)

    kernel: int = Field(..., gt=0)
    stride: int = Field(default=1, gt=0)
    padding: int = Field(default=0, ge=0)
    in_channels: int = Field(..., gt=0)
    out_channels: int = Field(..., gt=0)
    transposed: bool = False

    def output_extent(self, extent: int) -> int:
        if self.transposed:
            return (extent - 1) * self.stride - 2 * self.padding + self.kernel
        return (extent + 2 * self.padding - self.kernel) // self.stride + 1

    def output_hw(self, height: int, width: int) -> Tuple[int, int]:
        return self.output_extent(height), self.output_extent(width)

    @property
    def weight_shape(self) -> Tuple[int, int, int, int]:
        # conv: (out, in, k, k); transposed conv shares the adjoint layout (in, out, k, k)
        if self.transposed:
            return (self.in_channels, self.out_channels, self.kernel, self.kernel)
        return (self.out_channels, self.in_channels, self.kernel, self.kernel)

    @property
    def parameter_count(self) -> int:
        return self.in_channels * self.out_channels * self.kernel * self.kernel + self.out_channels


class CorrSpec(BaseModel):
    """1D correlation parameters; only k=1, s1=s2=1 is implemented."""

    model_config = ConfigDict(frozen=True)

    max_displacement: int = Field(..., ge=0)
    patch_size: int = Field(default=1, gt=0)
    stride1: int = Field(default=1, gt=0)
    stride2: int = Field(default=1, gt=0)

    @property
    def out_channels(self) -> int:
        return self.max_displacement + 1


# =============================================================================
# Component Configs
# =============================================================================


class MsfmConfig(BaseModel):
    """Multi-scale features module configuration."""

    model_config = ConfigDict(frozen=True)

    width_multiplier: float = Field(default=1.0, gt=0.0, le=1.0)
    height: int = Field(default=384, gt=0)
    width: int = Field(default=768, gt=0)
    relu_on_reducers: bool = False

    @field_validator("width_multiplier", mode="before")
    @classmethod
    def _parse_multiplier(cls, value: Any) -> float:
        return parse_rational(value)

    @model_validator(mode="after")
    def _check_resolution(self) -> "MsfmConfig":
        if self.height % 64 or self.width % 64:
            raise ValueError(
                f"resolution {self.height}x{self.width} must be divisible by 64"
            )
        scale_channels(SMALLEST_TABLE_CHANNELS, self.width_multiplier)
        return self

    def channels(self, table_channels: int) -> int:
        return scale_channels(table_channels, self.width_multiplier)


class SchmConfig(BaseModel):
    """Skip connection hourglass module configuration."""

    model_config = ConfigDict(frozen=True)

    max_displacement: int = Field(default=40, ge=0)
    use_local_prior_in_cost: bool = True
    supervise_coarsest: bool = False

    @property
    def corr(self) -> CorrSpec:
        return CorrSpec(max_displacement=self.max_displacement)


class SgrmConfig(BaseModel):
    """Stacked guidance residual module configuration."""

    model_config = ConfigDict(frozen=True)

    stack_count: int = Field(default=3, ge=1, le=3)
    guidance_enabled: bool = True
    fine_displacement: int = Field(default=10, ge=0)
    share_stacks: bool = False
    use_local_details_in_guidance: bool = True
    add_local_prior_to_sgrm: bool = False

    @property
    def corr(self) -> CorrSpec:
        return CorrSpec(max_displacement=self.fine_displacement)


class DatasetFilterRule(BaseModel):
    """Reject a sample when too many disparities are very large."""

    model_config = ConfigDict(frozen=True)

    fraction_threshold: float = Field(default=0.25, ge=0.0, le=1.0)
    disparity_threshold: float = Field(default=300.0, gt=0.0)


class TrainConfig(BaseModel):
    """Everything a training run needs; flat so it maps onto a key=value file."""

    # Network
    width_multiplier: float = Field(default=0.125, gt=0.0, le=1.0)
    height: int = Field(default=64, gt=0)
    width: int = Field(default=128, gt=0)
    max_displacement: int = Field(default=8, ge=0)
    fine_displacement: int = Field(default=4, ge=0)
    stack_count: int = Field(default=3, ge=1, le=3)
    guidance_enabled: bool = True
    use_local_prior_in_cost: bool = True
    use_local_details_in_guidance: bool = True
    add_local_prior_to_sgrm: bool = False
    share_stacks: bool = False
    supervise_coarsest: bool = False
    relu_on_reducers: bool = False

    # Optimization
    learning_rate: float = Field(default=1e-3, gt=0.0)
    lr_step_every: Optional[int] = Field(default=1000, gt=0)
    lr_boundaries: List[int] = Field(default_factory=list)
    lr_decay: float = Field(default=0.5, gt=0.0, le=1.0)
    adam_beta1: float = Field(default=0.9, ge=0.0, lt=1.0)
    adam_beta2: float = Field(default=0.999, ge=0.0, lt=1.0)
    adam_eps: float = Field(default=1e-8, gt=0.0)
    iterations: int = Field(default=2000, gt=0)
    batch_size: int = Field(default=2, gt=0)
    seed: int = 0
    loss_weights: Optional[List[float]] = None

    # Data
    crop_height: Optional[int] = Field(default=None, gt=0)
    crop_width: Optional[int] = Field(default=None, gt=0)
    filter_fraction: float = Field(default=0.25, ge=0.0, le=1.0)
    filter_disparity: float = Field(default=300.0, gt=0.0)

    # Housekeeping
    validate_every: int = Field(default=250, gt=0)
    checkpoint_every: int = Field(default=500, gt=0)
    check_finite: bool = True

    @field_validator("width_multiplier", mode="before")
    @classmethod
    def _parse_multiplier(cls, value: Any) -> float:
        return parse_rational(value)

    @field_validator("lr_boundaries", mode="before")
    @classmethod
    def _parse_boundaries(cls, value: Any) -> Any:
        return parse_int_list(value)

    @field_validator("loss_weights", mode="before")
    @classmethod
    def _parse_weights(cls, value: Any) -> Any:
        return parse_float_list(value)

    @field_validator("lr_step_every", "crop_height", "crop_width", mode="before")
    @classmethod
    def _none_string(cls, value: Any) -> Any:
        if isinstance(value, str) and value.strip().lower() in ("", "none"):
            return None
        return value

    @model_validator(mode="after")
    def _check_resolution(self) -> "TrainConfig":
        for name in ("height", "width", "crop_height", "crop_width"):
            value = getattr(self, name)
            if value is not None and value % 64:
                raise ValueError(f"{name}={value} must be divisible by 64")
        if self.lr_boundaries != sorted(self.lr_boundaries):
            raise ValueError("lr_boundaries must be increasing")
        scale_channels(SMALLEST_TABLE_CHANNELS, self.width_multiplier)
        return self

    def msfm(self) -> MsfmConfig:
        return MsfmConfig(
            width_multiplier=self.width_multiplier,
            height=self.height,
            width=self.width,
            relu_on_reducers=self.relu_on_reducers,
        )

    def schm(self) -> SchmConfig:
        return SchmConfig(
            max_displacement=self.max_displacement,
            use_local_prior_in_cost=self.use_local_prior_in_cost,
            supervise_coarsest=self.supervise_coarsest,
        )

    def sgrm(self) -> SgrmConfig:
        return SgrmConfig(
            stack_count=self.stack_count,
            guidance_enabled=self.guidance_enabled,
            fine_displacement=self.fine_displacement,
            share_stacks=self.share_stacks,
            use_local_details_in_guidance=self.use_local_details_in_guidance,
            add_local_prior_to_sgrm=self.add_local_prior_to_sgrm,
        )

    def filter_rule(self) -> DatasetFilterRule:
        return DatasetFilterRule(
            fraction_threshold=self.filter_fraction,
            disparity_threshold=self.filter_disparity,
        )


# =============================================================================
# Reports
# =============================================================================


class SampleMetrics(BaseModel):
    """Per-sample evaluation values."""

    index: int
    epe: float
    three_px: float
    d1: float
    epe_noc: Optional[float] = None
    three_px_noc: Optional[float] = None


class MetricsReport(BaseModel):
    """Evaluation or training summary; aggregates are recomputed from samples."""

    samples: List[SampleMetrics] = Field(default_factory=list)
    per_scale_losses: Dict[str, float] = Field(default_factory=dict)
    seconds_per_iteration: float = 0.0

    @computed_field
    @property
    def epe(self) -> float:
        return _mean([s.epe for s in self.samples])

    @computed_field
    @property
    def three_px(self) -> float:
        return _mean([s.three_px for s in self.samples])

    @computed_field
    @property
    def d1(self) -> float:
        return _mean([s.d1 for s in self.samples])

    @classmethod
    def merge(cls, reports: List["MetricsReport"]) -> "MetricsReport":
        """Combine shard reports; order-insensitive up to sample ordering."""
        samples = sorted(
            (s for r in reports for s in r.samples), key=lambda s: s.index
        )
        losses: Dict[str, float] = {}
        for report in reports:
            losses.update(report.per_scale_losses)
        seconds = max((r.seconds_per_iteration for r in reports), default=0.0)
        return cls(samples=samples, per_scale_losses=losses, seconds_per_iteration=seconds)


class IterationRecord(BaseModel):
    """One row of the training metrics stream."""

    iteration: int
    loss: float
    epe: float
    three_px: float
    lr: float
    components: Dict[str, float] = Field(default_factory=dict)
    seconds: float = 0.0

    def csv_row(self) -> str:
        return f"{self.iteration},{self.loss:.9g},{self.epe:.9g},{self.three_px:.9g},{self.lr:.9g}"


class GradCheckResult(BaseModel):
    """Outcome of one finite-difference check."""

    name: str
    max_relative_error: float
    tolerance: float

    @computed_field
    @property
    def passed(self) -> bool:
        return self.max_relative_error < self.tolerance


def _mean(values: List[float]) -> float:
    if not values:
        return 0.0
    return float(sum(values) / len(values))
