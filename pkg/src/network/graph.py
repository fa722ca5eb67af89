"""Named layer graph shared by execution, shape algebra and the wiring dump.

Every component registers its layers through a LayerGraph. In symbolic mode
only channel counts and resolutions are tracked, which is enough to dump the
full-size wiring or count parameters without running a convolution.
"""

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import structlog

from ..shared.errors import ConfigurationError, ShapeError
from ..shared.schemas import ConvSpec, CorrSpec, LayerKind
from ..stereo.disparity import DisparityMap
from ..stereo.ops import correlation_1d, error_map, warp_horizontal
from ..tensor import (
    ParameterStore,
    Tensor,
    add,
    assert_finite,
    concat_channels,
    conv2d,
    relu,
    transpose_conv2d,
    upsample_nearest,
    zeros,
)

logger = structlog.get_logger()

Sources = Union[str, Sequence[str]]


@dataclass(frozen=True)
class Node:
    """One registered layer: its wiring plus the resulting C×H×W."""

    name: str
    kind: LayerKind
    inputs: Tuple[str, ...]
    in_channels: Optional[int]
    channels: int
    height: int
    width: int
    kernel: Optional[int] = None
    stride: Optional[int] = None
    padding: Optional[int] = None
    spec: Optional[ConvSpec] = None
    param_key: Optional[str] = None
    relu: bool = False

    def describe(self) -> str:
        """name kind kernel stride pad in_ch out_ch WxH inputs"""
        joiner = "+" if self.kind is LayerKind.ADD else ","
        fields = [
            self.name,
            self.kind.value,
            _field(self.kernel),
            _field(self.stride),
            _field(self.padding),
            _field(self.in_channels),
            str(self.channels),
            f"{self.width}x{self.height}",
            joiner.join(self.inputs) or "-",
        ]
        return " ".join(fields)


def _field(value: Optional[int]) -> str:
    return "-" if value is None else str(value)


def _as_list(sources: Sources) -> List[str]:
    return [sources] if isinstance(sources, str) else list(sources)


class LayerGraph:
    """Registers layers in call order and, unless symbolic, evaluates them."""

    def __init__(
        self,
        params: Optional[ParameterStore] = None,
        symbolic: bool = False,
        check_finite: bool = True,
    ):
        if not symbolic and params is None:
            raise ConfigurationError("an executing graph needs a parameter store")
        self.params = params
        self.symbolic = symbolic
        self.check_finite = check_finite
        self.nodes: Dict[str, Node] = {}
        self.values: Dict[str, Tensor] = {}
        self._by_id: Dict[int, str] = {}
        self.batch: Optional[int] = None
        self.log = logger.bind(component="LayerGraph")

    @classmethod
    def shapes_only(cls) -> "LayerGraph":
        return cls(params=None, symbolic=True)

    # -------------------------------------------------------------------------
    # Lookup
    # -------------------------------------------------------------------------

    def __contains__(self, name: str) -> bool:
        return name in self.nodes

    def node(self, name: str) -> Node:
        try:
            return self.nodes[name]
        except KeyError:
            raise ConfigurationError(f"no layer named {name!r} in the graph") from None

    def shape(self, name: str) -> Tuple[int, int, int]:
        node = self.node(name)
        return node.channels, node.height, node.width

    def tensor(self, name: str) -> Tensor:
        self.node(name)
        if self.symbolic:
            raise ConfigurationError("symbolic graphs hold no values", layer=name)
        return self.values[name]

    def name_of(self, tensor: Tensor) -> Optional[str]:
        return self._by_id.get(id(tensor))

    def describe(self) -> str:
        """The wiring dump, one line per layer in registration order."""
        return "".join(node.describe() + "\n" for node in self.nodes.values())

    def parameter_count(self) -> int:
        """Learnable scalars, counting each shared parameter key once."""
        seen: Dict[str, int] = {}
        for node in self.nodes.values():
            if node.spec is not None and node.param_key not in seen:
                seen[node.param_key] = node.spec.parameter_count
        return sum(seen.values())

    def channel_layout(self, name: str) -> Dict[str, Tuple[int, int]]:
        """Channel range each input occupies in a concatenating layer's input."""
        node = self.node(name)
        layout: Dict[str, Tuple[int, int]] = {}
        offset = 0
        for source in node.inputs:
            channels = self.nodes[source].channels
            layout[source] = (offset, offset + channels)
            offset += channels
        return layout

    # -------------------------------------------------------------------------
    # Registration
    # -------------------------------------------------------------------------

    def _register(self, node: Node, value: Optional[Tensor]) -> str:
        if node.name in self.nodes:
            raise ConfigurationError("layer registered twice", layer=node.name)
        self.nodes[node.name] = node
        if value is not None:
            if self.check_finite:
                assert_finite(value, node.name)
            self.values[node.name] = value
            self._by_id[id(value)] = node.name
        return node.name

    def _spatial(self, name: str, sources: List[str]) -> Tuple[int, int]:
        for source in sources:
            self.node(source)
        first = self.nodes[sources[0]]
        for other in sources[1:]:
            node = self.nodes[other]
            if (node.height, node.width) != (first.height, first.width):
                raise ShapeError(
                    f"{name}: {first.name} is {first.width}x{first.height} but "
                    f"{node.name} is {node.width}x{node.height}"
                )
        return first.height, first.width

    def input(self, name: str, value: Union[Tensor, Tuple[int, int, int]]) -> str:
        """Register an image or an externally computed tensor."""
        if isinstance(value, Tensor):
            n, channels, height, width = value.shape
            self._check_batch(name, n)
            tensor = None if self.symbolic else value
        else:
            channels, height, width = value
            tensor = None
            if not self.symbolic:
                raise ConfigurationError("executing graphs need tensor inputs", layer=name)
        node = Node(name, LayerKind.INPUT, (), None, channels, height, width)
        return self._register(node, tensor)

    def adopt(self, tensor: Tensor, name: str) -> str:
        """Name of a tensor already in the graph, registering it as an input otherwise."""
        known = self.name_of(tensor)
        return known if known is not None else self.input(name, tensor)

    def _check_batch(self, name: str, n: int) -> None:
        if self.batch is None:
            self.batch = n
        elif n != self.batch:
            raise ShapeError(f"{name}: batch {n} differs from graph batch {self.batch}")

    def conv(
        self,
        name: str,
        sources: Sources,
        out_channels: int,
        kernel: int,
        stride: int = 1,
        padding: Optional[int] = None,
        activation: bool = True,
        param_key: Optional[str] = None,
        transposed: bool = False,
    ) -> str:
        """(De)convolution over the channel concatenation of sources."""
        parts = _as_list(sources)
        height, width = self._spatial(name, parts)
        in_channels = sum(self.nodes[p].channels for p in parts)
        if padding is None:
            if transposed:
                raise ConfigurationError("deconvolutions need an explicit padding", layer=name)
            padding = kernel // 2
        spec = ConvSpec(
            kernel=kernel,
            stride=stride,
            padding=padding,
            in_channels=in_channels,
            out_channels=out_channels,
            transposed=transposed,
        )
        out_h, out_w = spec.output_hw(height, width)
        if out_h <= 0 or out_w <= 0:
            raise ConfigurationError(f"input {width}x{height} gives empty output {out_w}x{out_h}", layer=name)

        key = param_key or name
        value = None
        if not self.symbolic:
            x = concat_channels([self.values[p] for p in parts], names=parts)
            weight, bias = self.params.conv(key, spec)
            op = transpose_conv2d if transposed else conv2d
            value = op(x, weight, bias, spec, name=name)
            if activation:
                value = relu(value)

        kind = LayerKind.DECONV if transposed else LayerKind.CONV
        node = Node(
            name, kind, tuple(parts), in_channels, out_channels, out_h, out_w,
            kernel=kernel, stride=stride, padding=padding, spec=spec, param_key=key, relu=activation,
        )
        return self._register(node, value)

    def deconv(
        self,
        name: str,
        sources: Sources,
        out_channels: int,
        kernel: int,
        stride: int,
        padding: int,
        activation: bool = True,
        param_key: Optional[str] = None,
    ) -> str:
        return self.conv(
            name, sources, out_channels, kernel, stride, padding,
            activation=activation, param_key=param_key, transposed=True,
        )

    def add(self, name: str, a: str, b: str) -> str:
        first, second = self.node(a), self.node(b)
        if (first.channels, first.height, first.width) != (second.channels, second.height, second.width):
            raise ShapeError(
                f"{name}: {a} is {first.channels}x{first.width}x{first.height} but "
                f"{b} is {second.channels}x{second.width}x{second.height}"
            )
        value = None if self.symbolic else add(self.values[a], self.values[b])
        node = Node(name, LayerKind.ADD, (a, b), first.channels, first.channels, first.height, first.width)
        return self._register(node, value)

    def concat(self, name: str, sources: Sequence[str]) -> str:
        parts = list(sources)
        height, width = self._spatial(name, parts)
        channels = sum(self.nodes[p].channels for p in parts)
        value = None
        if not self.symbolic:
            value = concat_channels([self.values[p] for p in parts], names=parts)
        node = Node(name, LayerKind.CONCAT, tuple(parts), channels, channels, height, width)
        return self._register(node, value)

    def corr(self, name: str, left: str, right: str, spec: CorrSpec) -> str:
        first = self.node(left)
        if self.shape(left) != self.shape(right):
            raise ShapeError(f"{name}: {left} is {self.shape(left)} but {right} is {self.shape(right)}")
        if spec.max_displacement >= first.width:
            raise ConfigurationError(
                f"max displacement {spec.max_displacement} must be below width {first.width}", layer=name
            )
        value = None
        if not self.symbolic:
            value = correlation_1d(self.values[left], self.values[right], spec)
        node = Node(
            name, LayerKind.CORR, (left, right), first.channels, spec.out_channels, first.height, first.width,
            kernel=spec.patch_size, stride=spec.stride1,
        )
        return self._register(node, value)

    def nearest(self, name: str, source: str, factor: int) -> str:
        src = self.node(source)
        value = None if self.symbolic else upsample_nearest(self.values[source], factor)
        node = Node(
            name, LayerKind.NEAREST, (source,), src.channels, src.channels,
            src.height * factor, src.width * factor, stride=factor,
        )
        return self._register(node, value)

    def warp(self, name: str, source: str, disparity: str) -> str:
        src = self.node(source)
        self._spatial(name, [source, disparity])
        if self.node(disparity).channels != 1:
            raise ShapeError(f"{name}: disparity {disparity} has {self.node(disparity).channels} channels")
        value = None
        if not self.symbolic:
            value = warp_horizontal(self.values[source], DisparityMap(self.values[disparity]))
        node = Node(name, LayerKind.WARP, (source, disparity), src.channels, src.channels, src.height, src.width)
        return self._register(node, value)

    def absdiff(self, name: str, a: str, b: str) -> str:
        first = self.node(a)
        if self.shape(a) != self.shape(b):
            raise ShapeError(f"{name}: {a} is {self.shape(a)} but {b} is {self.shape(b)}")
        value = None if self.symbolic else error_map(self.values[a], self.values[b])
        node = Node(name, LayerKind.ABSDIFF, (a, b), first.channels, first.channels, first.height, first.width)
        return self._register(node, value)

    def zeros(self, name: str, like: str) -> str:
        """Constant zeros shaped like another layer."""
        ref = self.node(like)
        value = None
        if not self.symbolic:
            template = self.values[like]
            value = zeros(template.shape, dtype=template.dtype)
        node = Node(name, LayerKind.ZEROS, (like,), None, ref.channels, ref.height, ref.width)
        return self._register(node, value)

    def disparity(self, name: str, full_width: int) -> DisparityMap:
        """Wrap a single-channel layer as a DisparityMap with its scale."""
        node = self.node(name)
        if node.channels != 1:
            raise ShapeError(f"{name} has {node.channels} channels, disparities have 1")
        scale = full_width // node.width
        if scale * node.width != full_width:
            raise ShapeError(f"{name}: width {node.width} does not divide {full_width}")
        return DisparityMap(self.tensor(name), scale=scale)

