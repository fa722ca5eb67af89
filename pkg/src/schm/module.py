"""Skip Connection Hourglass Module.

Correlates the 1/8-scale fused features, concatenates the Local Prior
Feature onto the correlation, and regresses disparity through a
three-stage encoder and a six-stage decoder that ends at full resolution.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional

import structlog

from ..msfm.module import DETAILS_LEFT, LOCAL_PRIOR, MsfmOutputs
from ..network.graph import LayerGraph
from ..shared.errors import ConfigurationError
from ..shared.schemas import CorrSpec, MsfmConfig, SchmConfig
from ..stereo.disparity import DisparityMap
from ..tensor import ParameterStore, Tensor

logger = structlog.get_logger()

COST_VOLUME = "cost_volume"
CORRELATION = "corr_1d"

# (level, table channels) of the encoder; levels are powers of two below full scale.
ENCODER = ((4, 128), (5, 256), (6, 512))

# Decoder stage: (level, upconv channels, skip layer); level 0 is full resolution.
DECODER = (
    (5, 256, "schm_conv5_1"),
    (4, 128, "schm_conv4_1"),
    (3, 64, "schm_conv3_1"),
    (2, 32, "element_wise_2a"),
    (1, 16, "element_wise_1a"),
    (0, 16, DETAILS_LEFT),
)


def prediction_name(level: int) -> str:
    return f"pr_{level}"


@dataclass
class CostVolume:
    """Correlation channels followed by Local Prior Feature channels at 1/8 scale."""

    tensor: Tensor
    correlation_channels: int
    graph: LayerGraph
    msfm: MsfmConfig

    @property
    def channels(self) -> int:
        return self.tensor.shape[1]


@dataclass
class SchmOutputs:
    """Full-resolution initial disparity plus every supervised side prediction, coarse to fine."""

    initial_disparity: DisparityMap
    side_predictions: List[DisparityMap]
    names: List[str] = field(default_factory=list)

    def by_name(self) -> Dict[str, DisparityMap]:
        return dict(zip(self.names, self.side_predictions))


def build_cost_volume_layers(
    graph: LayerGraph, spec: CorrSpec, use_local_prior: bool = True, right: str = "element_wise_3b"
) -> str:
    graph.corr(CORRELATION, "element_wise_3a", right, spec)
    parts = [CORRELATION, LOCAL_PRIOR] if use_local_prior else [CORRELATION]
    return graph.concat(COST_VOLUME, parts)


def build_schm(graph: LayerGraph, msfm: MsfmConfig, config: SchmConfig, cost: str = COST_VOLUME) -> List[str]:
    """Register encoder and decoder; returns supervised prediction names, coarse to fine."""
    c = msfm.channels

    # Encoder: 1/8 -> 1/64
    previous = graph.conv("schm_conv3_1", cost, c(128), 3, 1)
    for level, channels in ENCODER:
        graph.conv(f"schm_conv{level}", previous, c(channels), 3, 2)
        previous = graph.conv(f"schm_conv{level}_1", f"schm_conv{level}", c(channels), 3, 1)

    supervised: List[str] = []
    coarser = graph.conv(prediction_name(6), previous, 1, 3, 1, activation=False)
    if config.supervise_coarsest:
        supervised.append(coarser)

    # Decoder: 1/64 -> full resolution
    for level, channels, skip in DECODER:
        upconv = graph.deconv(f"upconv_{level}", previous, c(channels), 4, 2, 1)
        upsampled = graph.deconv(
            f"up_pr_{level + 1}to{level}", coarser, 1, 4, 2, 1, activation=False
        )
        previous = graph.conv(f"iconv_{level}", [upconv, skip, upsampled], c(channels), 3, 1)
        coarser = graph.conv(prediction_name(level), previous, 1, 3, 1, activation=False)
        supervised.append(coarser)
    return supervised


def build_cost_volume(
    msfm_out: MsfmOutputs,
    right_scale3_feature: Optional[Tensor] = None,
    spec: Optional[CorrSpec] = None,
    use_local_prior: bool = True,
) -> CostVolume:
    """Correlate element_wise_3a against the right 1/8 feature and append the Local Prior Feature."""
    spec = spec or CorrSpec(max_displacement=40)
    graph = msfm_out.graph
    right = "element_wise_3b"
    if right_scale3_feature is not None:
        right = graph.adopt(right_scale3_feature, "right_scale3_feature")
    name = build_cost_volume_layers(graph, spec, use_local_prior, right)
    return CostVolume(
        graph.tensor(name), correlation_channels=spec.out_channels, graph=graph, msfm=msfm_out.config
    )


def schm_forward(
    cost: CostVolume,
    local_details_left: Tensor,
    params: Optional[ParameterStore] = None,
    msfm: Optional[MsfmConfig] = None,
    config: Optional[SchmConfig] = None,
) -> SchmOutputs:
    """Regress the initial disparity and side predictions from a cost volume."""
    graph = cost.graph
    if params is not None and params is not graph.params:
        raise ConfigurationError("schm_forward must run on the parameter store of its cost volume")
    if DETAILS_LEFT not in graph or graph.tensor(DETAILS_LEFT) is not local_details_left:
        raise ConfigurationError("local details must come from the same MSFM pass as the cost volume")
    full_width = local_details_left.shape[3]
    msfm = msfm or cost.msfm
    config = config or SchmConfig(max_displacement=cost.correlation_channels - 1)

    names = build_schm(graph, msfm, config, COST_VOLUME)
    maps = [graph.disparity(name, full_width) for name in names]
    logger.debug("SCHM forward complete", predictions=len(maps))
    return SchmOutputs(initial_disparity=maps[-1], side_predictions=maps, names=names)
