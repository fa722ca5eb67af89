"""Dense 4-D tensors and the reverse-mode tape."""

from contextvars import ContextVar
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import structlog

from ..shared.errors import NonFiniteError, ShapeError, TapeError

logger = structlog.get_logger()

FLOAT_TYPES = (np.dtype(np.float32), np.dtype(np.float64))

BackwardRule = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tensor:
    """N×C×H×W array with an optional gradient slot.

    Values are float32 unless built from float64 data (gradient checking).
    """

    __slots__ = ("data", "grad", "requires_grad", "name")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        name: Optional[str] = None,
        dtype=None,
    ):
        array = np.asarray(data)
        if dtype is None:
            dtype = array.dtype if array.dtype in FLOAT_TYPES else np.float32
        array = np.ascontiguousarray(array, dtype=dtype)
        if array.ndim != 4:
            raise ShapeError(f"tensors are 4-D (N, C, H, W), got shape {array.shape}")
        self.data: np.ndarray = array
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> Tuple[int, int, int, int]:
        return self.data.shape  # type: ignore[return-value]

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single value, tensor has shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.data).all())

    def __repr__(self) -> str:
        label = f" name={self.name}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label}, requires_grad={self.requires_grad})"


def constant(data, dtype=None) -> Tensor:
    """A tensor that never receives gradients."""
    return Tensor(data, requires_grad=False, dtype=dtype)


def zeros(shape: Tuple[int, int, int, int], dtype=np.float32) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype))


@dataclass
class TapeRecord:
    """One recorded operation."""

    op: str
    output: Tensor
    inputs: Tuple[Tensor, ...]
    backward: BackwardRule


_ACTIVE_TAPE: ContextVar[Optional["Tape"]] = ContextVar("msfnet_active_tape", default=None)


class Tape:
    """Ordered record of operations, active as a context manager.

    Recording is per context (and thus per thread); code running without an
    active tape does no bookkeeping.
    """

    def __init__(self):
        self.records: List[TapeRecord] = []
        self._produced: Dict[int, int] = {}
        self._token = None

    def __enter__(self) -> "Tape":
        self._token = _ACTIVE_TAPE.set(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        _ACTIVE_TAPE.reset(self._token)
        self._token = None

    def __len__(self) -> int:
        return len(self.records)

    def record(self, op: str, output: Tensor, inputs: Tuple[Tensor, ...], rule: BackwardRule) -> None:
        self._produced[id(output)] = len(self.records)
        self.records.append(TapeRecord(op=op, output=output, inputs=inputs, backward=rule))

    def produced(self, tensor: Tensor) -> bool:
        return id(tensor) in self._produced

    def backward(self, loss: Tensor) -> None:
        backward(loss, self)


def record(op: str, output: np.ndarray, inputs: Tuple[Tensor, ...], rule: BackwardRule) -> Tensor:
    """Wrap a kernel result and put it on the active tape when gradients are wanted."""
    requires_grad = any(t.requires_grad for t in inputs)
    out = Tensor(output, requires_grad=requires_grad, dtype=output.dtype)
    tape = _ACTIVE_TAPE.get()
    if requires_grad and tape is not None:
        tape.record(op, out, inputs, rule)
    return out


def backward(loss: Tensor, tape: Tape) -> None:
    """Populate .grad on every requires_grad tensor reachable from a scalar loss.

    Records are visited in exact reverse order; fan-out accumulates additively.
    Leaf gradients accumulate across calls, intermediate gradients are overwritten.
    """
    if loss.shape != (1, 1, 1, 1):
        raise ShapeError(f"backward needs a 1x1x1x1 scalar loss, got {loss.shape}")
    if not tape.produced(loss):
        raise TapeError("loss was not produced by this tape")
    if not np.isfinite(loss.data).all():
        raise NonFiniteError("loss is not finite", layer="loss")

    grads: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    leaves: Dict[int, Tensor] = {}

    for rec in reversed(tape.records):
        grad = grads.pop(id(rec.output), None)
        if grad is None:
            continue
        rec.output.grad = grad
        input_grads = rec.backward(grad)
        for tensor, g in zip(rec.inputs, input_grads):
            if g is None or not tensor.requires_grad:
                continue
            key = id(tensor)
            if key in grads:
                grads[key] = grads[key] + g
            else:
                grads[key] = g
            if not tape.produced(tensor):
                leaves[key] = tensor

    for key, tensor in leaves.items():
        g = grads.get(key)
        if g is None:
            continue
        tensor.grad = g if tensor.grad is None else tensor.grad + g


def assert_finite(tensor: Tensor, layer: str) -> Tensor:
    """Raise NonFiniteError naming the layer when the tensor holds NaN/Inf."""
    if not tensor.is_finite():
        logger.error("Non-finite activation", layer=layer, shape=tensor.shape)
        raise NonFiniteError("non-finite values in forward output", layer=layer)
    return tensor
