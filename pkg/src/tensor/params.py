"""Named, seeded parameter registry."""

import math
import zlib
from typing import Dict, Iterator, Mapping, Tuple

import numpy as np
import structlog

from ..shared.errors import ConfigurationError, ShapeError
from ..shared.schemas import ConvSpec
from .core import Tensor

logger = structlog.get_logger()


class ParameterStore:
    """Holds every learnable tensor of a network, keyed "<layer>.weight" / "<layer>.bias".

    Each layer draws from its own generator seeded by (seed, layer key), so
    toggling one module never changes another module's initial weights.
    Weights are fan-in scaled uniform, bound sqrt(1 / (in_channels * k * k));
    biases start at zero.
    """

    def __init__(self, seed: int = 0, dtype=np.float32):
        self.seed = seed
        self.dtype = np.dtype(dtype)
        self._params: Dict[str, Tensor] = {}
        self.log = logger.bind(component="ParameterStore")

    def conv(self, key: str, spec: ConvSpec) -> Tuple[Tensor, Tensor]:
        """Weight and bias for a (de)conv layer, created on first request."""
        wkey, bkey = f"{key}.weight", f"{key}.bias"
        if wkey in self._params:
            weight, bias = self._params[wkey], self._params[bkey]
            if weight.shape != spec.weight_shape:
                raise ConfigurationError(
                    f"shared weights shaped {weight.shape}, layer wants {spec.weight_shape}", layer=key
                )
            return weight, bias

        rng = np.random.default_rng([self.seed, zlib.crc32(key.encode("utf-8"))])
        bound = math.sqrt(1.0 / (spec.in_channels * spec.kernel * spec.kernel))
        weight = Tensor(
            rng.uniform(-bound, bound, size=spec.weight_shape).astype(self.dtype),
            requires_grad=True,
            name=wkey,
        )
        bias = Tensor(
            np.zeros((1, spec.out_channels, 1, 1), dtype=self.dtype),
            requires_grad=True,
            name=bkey,
        )
        self._params[wkey] = weight
        self._params[bkey] = bias
        return weight, bias

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def items(self):
        return self._params.items()

    def count(self) -> int:
        """Total learnable scalars."""
        return int(sum(t.data.size for t in self._params.values()))

    def zero_grad(self) -> None:
        for tensor in self._params.values():
            tensor.grad = None

    def zero_(self, prefix: str) -> int:
        """Zero weights and biases of every layer whose key starts with prefix."""
        touched = 0
        for name, tensor in self._params.items():
            if name.startswith(prefix):
                tensor.data[...] = 0
                touched += 1
        return touched

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self._params.items()}

    def load_state_dict(self, state: Mapping[str, np.ndarray], strict: bool = True) -> None:
        if strict:
            missing = sorted(set(self._params) - set(state))
            unexpected = sorted(set(state) - set(self._params))
            if missing or unexpected:
                raise ConfigurationError(
                    f"parameter mismatch: missing {missing[:5]}, unexpected {unexpected[:5]}"
                )
        for name, array in state.items():
            if name not in self._params:
                continue
            target = self._params[name]
            if target.shape != tuple(array.shape):
                raise ShapeError(f"{name}: stored shape {tuple(array.shape)} vs {target.shape}")
            target.data[...] = array.astype(target.dtype, copy=False)
