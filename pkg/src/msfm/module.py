"""Multi-scale Features Module.

Siamese feature extractor producing the Local Prior Feature (left image,
1/8 scale), Local Details (both images, full scale) and compressed
features (both images, 1/2 scale). Layers are registered in the row order
of the reference layer table; left/right rows share weights.
"""

from dataclasses import dataclass, field
from typing import Dict, Optional

import structlog

from ..network.graph import LayerGraph
from ..shared.errors import ShapeError
from ..shared.schemas import MsfmConfig
from ..tensor import ParameterStore, Tensor

logger = structlog.get_logger()

IMAGE_LEFT = "image_left"
IMAGE_RIGHT = "image_right"
LOCAL_PRIOR = "conv_convat1_5_3a"
DETAILS_LEFT = "conv_convat_a"
DETAILS_RIGHT = "conv_convat_b"
COMPRESSED_LEFT = "conv_1a_r"
COMPRESSED_RIGHT = "conv_1b_r"

# (stack, kernel, stride, table channels) for conv_i; conv_i_1 is k3 s1 at the same width.
STACKS = (
    (1, 7, 2, 32),
    (2, 5, 2, 64),
    (3, 5, 2, 128),
    (4, 3, 2, 256),
    (5, 3, 2, 512),
)


def build_msfm(graph: LayerGraph, config: MsfmConfig) -> None:
    """Register every MSFM layer on a graph that already holds both images."""
    c = config.channels
    reducer_relu = config.relu_on_reducers

    # Five stacked conv pairs, Siamese
    for stack, kernel, stride, channels in STACKS:
        for side, image in (("a", IMAGE_LEFT), ("b", IMAGE_RIGHT)):
            source = image if stack == 1 else f"conv_{stack - 1}{side}_1"
            graph.conv(f"conv_{stack}{side}", source, c(channels), kernel, stride, param_key=f"conv_{stack}")
        for side in "ab":
            graph.conv(f"conv_{stack}{side}_1", f"conv_{stack}{side}", c(channels), 3, 1, param_key=f"conv_{stack}_1")

    # Local Prior Feature, left branch
    for stack in (1, 3, 5):
        graph.add(f"element_wise_{stack}a", f"conv_{stack}a", f"conv_{stack}a_1")
    graph.conv("down_sample_1a", "element_wise_1a", c(32), 3, 4, 1)
    graph.deconv("upsample_5a", "element_wise_5a", c(512), 4, 4, 0)
    graph.conv(
        LOCAL_PRIOR, ["down_sample_1a", "upsample_5a", "element_wise_3a"], c(64), 1, 1, 0,
        activation=reducer_relu,
    )

    # Local Details, left
    graph.add("element_wise_2a", "conv_2a", "conv_2a_1")
    graph.deconv("upsample_2a", "element_wise_2a", c(32), 8, 4, 2, param_key="upsample_2")
    graph.deconv("upsample_1a", "element_wise_1a", c(32), 4, 2, 1, param_key="upsample_1")
    graph.conv(
        DETAILS_LEFT, ["upsample_1a", "upsample_2a"], c(32), 1, 1, 0,
        activation=reducer_relu, param_key="conv_convat",
    )

    # Local Details, right
    graph.add("element_wise_1b", "conv_1b", "conv_1b_1")
    graph.add("element_wise_2b", "conv_2b", "conv_2b_1")
    graph.deconv("upsample_2b", "element_wise_2b", c(32), 8, 4, 2, param_key="upsample_2")
    graph.deconv("upsample_1b", "element_wise_1b", c(32), 4, 2, 1, param_key="upsample_1")
    graph.conv(
        DETAILS_RIGHT, ["upsample_1b", "upsample_2b"], c(32), 1, 1, 0,
        activation=reducer_relu, param_key="conv_convat",
    )

    # Compressed features
    graph.conv(COMPRESSED_LEFT, "conv_1a", c(16), 3, 1, param_key="conv_1_r")
    graph.conv(COMPRESSED_RIGHT, "conv_1b", c(16), 3, 1, param_key="conv_1_r")

    # Right 1/8 fusion feature for the correlation
    graph.add("element_wise_3b", "conv_3b", "conv_3b_1")


def register_images(graph: LayerGraph, config: MsfmConfig, left: Optional[Tensor], right: Optional[Tensor]) -> None:
    if left is None or right is None:
        graph.input(IMAGE_LEFT, (3, config.height, config.width))
        graph.input(IMAGE_RIGHT, (3, config.height, config.width))
        return
    if left.shape != right.shape:
        raise ShapeError(f"left image {left.shape} vs right image {right.shape}")
    if left.shape[1] != 3:
        raise ShapeError(f"images have 3 channels, got {left.shape[1]}")
    height, width = left.shape[2], left.shape[3]
    if height % 64 or width % 64:
        raise ShapeError(f"image {width}x{height} must be divisible by 64 in both axes")
    graph.input(IMAGE_LEFT, left)
    graph.input(IMAGE_RIGHT, right)


@dataclass
class MsfmOutputs:
    """Feature products of the MSFM, backed by the graph they were computed on."""

    local_prior_feature: Tensor
    local_details_left: Tensor
    local_details_right: Tensor
    compressed_left: Tensor
    compressed_right: Tensor
    graph: LayerGraph
    config: MsfmConfig
    fusion: Dict[str, Tensor] = field(default_factory=dict)

    @classmethod
    def from_graph(cls, graph: LayerGraph, config: MsfmConfig) -> "MsfmOutputs":
        fusion = {
            name: graph.tensor(name)
            for name in graph.nodes
            if name.startswith("element_wise_")
        }
        return cls(
            local_prior_feature=graph.tensor(LOCAL_PRIOR),
            local_details_left=graph.tensor(DETAILS_LEFT),
            local_details_right=graph.tensor(DETAILS_RIGHT),
            compressed_left=graph.tensor(COMPRESSED_LEFT),
            compressed_right=graph.tensor(COMPRESSED_RIGHT),
            graph=graph,
            config=config,
            fusion=fusion,
        )


def msfm_forward(
    left: Tensor,
    right: Tensor,
    config: MsfmConfig,
    params: ParameterStore,
    graph: Optional[LayerGraph] = None,
) -> MsfmOutputs:
    """Run both branches; the returned outputs keep the graph for later modules."""
    if graph is None:
        graph = LayerGraph(params)
    if (left.shape[2], left.shape[3]) != (config.height, config.width):
        raise ShapeError(
            f"image {left.shape[3]}x{left.shape[2]} does not match configured {config.width}x{config.height}"
        )
    register_images(graph, config, left, right)
    build_msfm(graph, config)
    return MsfmOutputs.from_graph(graph, config)


def msfm_parameter_count(config: MsfmConfig) -> int:
    """Learnable scalars of the MSFM at the configured width multiplier."""
    graph = LayerGraph.shapes_only()
    register_images(graph, config, None, None)
    build_msfm(graph, config)
    return graph.parameter_count()
