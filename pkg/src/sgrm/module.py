"""Stacked Guidance Residual Module.

Each stack warps the right Local Details by the current disparity, takes
the absolute difference with the left Local Details as guidance, and adds
the residual of a small 3-down/3-up hourglass to the disparity.
"""

from dataclasses import dataclass
from typing import List, Optional

import structlog

from ..msfm.module import (
    COMPRESSED_LEFT,
    COMPRESSED_RIGHT,
    DETAILS_LEFT,
    DETAILS_RIGHT,
    LOCAL_PRIOR,
    MsfmOutputs,
)
from ..network.graph import LayerGraph
from ..shared.errors import ConfigurationError, ShapeError
from ..shared.schemas import MsfmConfig, SgrmConfig
from ..stereo.disparity import DisparityMap
from ..stereo.ops import error_map, warp_horizontal
from ..tensor import ParameterStore, Tensor

logger = structlog.get_logger()

FINE_CORRELATION = "corr_fine"
FINE_CORRELATION_UP = "corr_fine_up"
LOCAL_PRIOR_UP = "local_prior_up"


def compute_guidance(disparity: DisparityMap, local_details_left: Tensor, local_details_right: Tensor) -> Tensor:
    """|F_L - warp(F_R, d)|, differentiable in the disparity too."""
    if local_details_left.shape != local_details_right.shape:
        raise ShapeError(f"local details {local_details_left.shape} vs {local_details_right.shape}")
    return error_map(local_details_left, warp_horizontal(local_details_right, disparity))


@dataclass
class GrmInputs:
    """Everything one guidance residual block concatenates, all at full resolution."""

    current_disparity: DisparityMap
    error_guidance: Tensor
    local_details_left: Tensor
    fine_correlation: Tensor
    local_prior: Optional[Tensor] = None


@dataclass
class SgrmOutputs:
    final: DisparityMap
    stages: List[DisparityMap]
    residuals: List[DisparityMap]
    names: List[str]
    graph: LayerGraph


def stack_prefix(stack: int) -> str:
    return f"grm_{stack}"


def build_grm(
    graph: LayerGraph,
    stack: int,
    inputs: List[str],
    msfm: MsfmConfig,
    share_stacks: bool = False,
) -> str:
    """Register one hourglass; returns the residual layer name."""
    c = msfm.channels
    prefix = stack_prefix(stack)
    key = "grm" if share_stacks else prefix

    grm_input = graph.concat(f"{prefix}_input", inputs)
    conv1 = graph.conv(f"{prefix}_conv1", grm_input, c(32), 3, 2, param_key=f"{key}_conv1")
    conv2 = graph.conv(f"{prefix}_conv2", conv1, c(64), 3, 2, param_key=f"{key}_conv2")
    conv3 = graph.conv(f"{prefix}_conv3", conv2, c(128), 3, 2, param_key=f"{key}_conv3")
    deconv3 = graph.deconv(f"{prefix}_deconv3", conv3, c(64), 4, 2, 1, param_key=f"{key}_deconv3")
    deconv2 = graph.deconv(f"{prefix}_deconv2", [deconv3, conv2], c(32), 4, 2, 1, param_key=f"{key}_deconv2")
    deconv1 = graph.deconv(f"{prefix}_deconv1", [deconv2, conv1], c(32), 4, 2, 1, param_key=f"{key}_deconv1")
    return graph.conv(
        f"{prefix}_res", [deconv1, grm_input], 1, 3, 1, activation=False, param_key=f"{key}_res"
    )


def build_sgrm(graph: LayerGraph, msfm: MsfmConfig, config: SgrmConfig, initial: str) -> List[str]:
    """Register the fine correlation and every stack; returns the per-stack disparity names."""
    if not 1 <= config.stack_count <= 3:
        raise ConfigurationError(f"stack_count must be 1, 2 or 3, got {config.stack_count}")

    graph.corr(FINE_CORRELATION, COMPRESSED_LEFT, COMPRESSED_RIGHT, config.corr)
    fine = graph.nearest(FINE_CORRELATION_UP, FINE_CORRELATION, 2)

    if config.use_local_details_in_guidance:
        details_left, details_right = DETAILS_LEFT, DETAILS_RIGHT
    else:
        details_left = graph.nearest("compressed_up_a", COMPRESSED_LEFT, 2)
        details_right = graph.nearest("compressed_up_b", COMPRESSED_RIGHT, 2)

    extra: List[str] = []
    if config.add_local_prior_to_sgrm:
        extra.append(graph.nearest(LOCAL_PRIOR_UP, LOCAL_PRIOR, 8))

    stages: List[str] = []
    current = initial
    for stack in range(1, config.stack_count + 1):
        if config.guidance_enabled:
            warped = graph.warp(f"warp_{stack}", details_right, current)
            guidance = graph.absdiff(f"guidance_{stack}", details_left, warped)
        else:
            guidance = graph.zeros(f"guidance_{stack}", details_left)
        residual = build_grm(
            graph, stack, [current, guidance, details_left, fine] + extra, msfm, config.share_stacks
        )
        current = graph.add(f"disp_{stack}", current, residual)
        stages.append(current)
    return stages


def grm_forward(
    inputs: GrmInputs,
    params: ParameterStore,
    msfm: MsfmConfig,
    stack: int = 1,
    share_stacks: bool = False,
) -> DisparityMap:
    """Residual of one guidance residual block for externally assembled inputs."""
    graph = LayerGraph(params)
    names = [
        graph.input("current_disparity", inputs.current_disparity.tensor),
        graph.input("error_guidance", inputs.error_guidance),
        graph.input("local_details_left", inputs.local_details_left),
        graph.input("fine_correlation", inputs.fine_correlation),
    ]
    if inputs.local_prior is not None:
        names.append(graph.input("local_prior", inputs.local_prior))
    residual = build_grm(graph, stack, names, msfm, share_stacks)
    return DisparityMap(graph.tensor(residual), scale=inputs.current_disparity.scale)


def sgrm_forward(
    initial: DisparityMap,
    msfm_out: MsfmOutputs,
    config: SgrmConfig,
    params: Optional[ParameterStore] = None,
) -> SgrmOutputs:
    """Refine the initial disparity through config.stack_count guidance residual blocks."""
    graph = msfm_out.graph
    if params is not None and params is not graph.params:
        raise ConfigurationError("sgrm_forward must run on the parameter store of its MSFM pass")
    if initial.scale != 1:
        raise ShapeError(f"initial disparity must be full resolution, got scale 1/{initial.scale}")

    start = graph.adopt(initial.tensor, "initial_disparity")
    names = build_sgrm(graph, msfm_out.config, config, start)
    stages = [DisparityMap(graph.tensor(name)) for name in names]
    residuals = [
        DisparityMap(graph.tensor(f"{stack_prefix(i)}_res")) for i in range(1, config.stack_count + 1)
    ]
    logger.debug("SGRM forward complete", stacks=config.stack_count, guidance=config.guidance_enabled)
    return SgrmOutputs(final=stages[-1], stages=stages, residuals=residuals, names=names, graph=graph)
