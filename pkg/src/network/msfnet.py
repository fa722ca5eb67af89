"""MSFNet assembly: MSFM -> cost volume -> SCHM -> SGRM, plus its training loss."""

from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
import structlog

from ..msfm.module import MsfmOutputs, build_msfm, register_images
from ..schm.module import SchmOutputs, build_cost_volume_layers, build_schm
from ..sgrm.module import SgrmOutputs, build_sgrm, stack_prefix
from ..shared.errors import ConfigurationError
from ..shared.schemas import TrainConfig
from ..stereo.disparity import DisparityMap
from ..stereo.losses import multiscale_loss
from ..tensor import ParameterStore, Tensor
from .graph import LayerGraph

logger = structlog.get_logger()


@dataclass
class NetworkLayers:
    """Names of the supervised layers registered by build_network."""

    schm: List[str]
    sgrm: List[str]

    @property
    def supervised(self) -> List[str]:
        return self.schm + self.sgrm


def build_network(graph: LayerGraph, config: TrainConfig) -> NetworkLayers:
    """Register the whole network on a graph that already holds both images."""
    msfm = config.msfm()
    schm = config.schm()
    build_msfm(graph, msfm)
    build_cost_volume_layers(graph, schm.corr, config.use_local_prior_in_cost)
    schm_layers = build_schm(graph, msfm, schm)
    sgrm_layers = build_sgrm(graph, msfm, config.sgrm(), schm_layers[-1])
    return NetworkLayers(schm=schm_layers, sgrm=sgrm_layers)


def symbolic_graph(config: TrainConfig) -> Tuple[LayerGraph, NetworkLayers]:
    graph = LayerGraph.shapes_only()
    register_images(graph, config.msfm(), None, None)
    return graph, build_network(graph, config)


def describe_network(config: TrainConfig) -> str:
    """Wiring dump of the full network at the configured size."""
    graph, _ = symbolic_graph(config)
    return graph.describe()


@dataclass
class MsfnetOutputs:
    msfm: MsfmOutputs
    schm: SchmOutputs
    sgrm: SgrmOutputs
    graph: LayerGraph

    @property
    def final(self) -> DisparityMap:
        return self.sgrm.final

    @property
    def initial(self) -> DisparityMap:
        return self.schm.initial_disparity

    def supervised(self) -> Tuple[List[DisparityMap], List[str]]:
        """SCHM side predictions coarse to fine, then every SGRM stack output."""
        return (
            self.schm.side_predictions + self.sgrm.stages,
            self.schm.names + self.sgrm.names,
        )


class MSFNet:
    """The assembled network over one ParameterStore."""

    def __init__(self, config: TrainConfig, params: Optional[ParameterStore] = None, dtype=np.float32):
        self.config = config
        self.params = params if params is not None else ParameterStore(seed=config.seed, dtype=dtype)
        self.log = logger.bind(component="MSFNet")

    def materialize(self) -> "MSFNet":
        """Create every parameter up front (optimizer state and checkpoints need the full set)."""
        graph, _ = symbolic_graph(self.config)
        for node in graph.nodes.values():
            if node.spec is not None:
                self.params.conv(node.param_key, node.spec)
        self.log.debug("Parameters materialized", tensors=len(self.params), scalars=self.params.count())
        return self

    def forward(self, left: Tensor, right: Tensor) -> MsfnetOutputs:
        graph = LayerGraph(self.params, check_finite=self.config.check_finite)
        msfm = self.config.msfm()
        if (left.shape[2], left.shape[3]) != (msfm.height, msfm.width):
            raise ConfigurationError(
                f"image {left.shape[3]}x{left.shape[2]} does not match configured {msfm.width}x{msfm.height}"
            )
        register_images(graph, msfm, left, right)
        layers = build_network(graph, self.config)

        full_width = msfm.width
        side = [graph.disparity(name, full_width) for name in layers.schm]
        stages = [graph.disparity(name, full_width) for name in layers.sgrm]
        residuals = [
            graph.disparity(f"{stack_prefix(i)}_res", full_width) for i in range(1, len(stages) + 1)
        ]
        return MsfnetOutputs(
            msfm=MsfmOutputs.from_graph(graph, msfm),
            schm=SchmOutputs(initial_disparity=side[-1], side_predictions=side, names=layers.schm),
            sgrm=SgrmOutputs(
                final=stages[-1], stages=stages, residuals=residuals, names=layers.sgrm, graph=graph
            ),
            graph=graph,
        )

    __call__ = forward

    def loss_weights(self, count: int) -> Optional[List[float]]:
        weights = self.config.loss_weights
        if weights is None:
            return None
        if len(weights) != count:
            raise ConfigurationError(f"loss_weights has {len(weights)} entries, network supervises {count} outputs")
        return list(weights)

    def loss(self, outputs: MsfnetOutputs, gt: DisparityMap) -> Tuple[Tensor, Dict[str, float]]:
        preds, names = outputs.supervised()
        return multiscale_loss(preds, gt, self.loss_weights(len(preds)), names)

    def describe(self) -> str:
        return describe_network(self.config)

    def parameter_count(self) -> int:
        graph, _ = symbolic_graph(self.config)
        return graph.parameter_count()
