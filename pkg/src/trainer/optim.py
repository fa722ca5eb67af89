"""Adam and the piecewise-constant learning-rate schedule."""

from typing import Dict, Optional, Tuple

import numpy as np
import structlog

from ..shared.errors import NonFiniteError, ShapeError
from ..shared.schemas import TrainConfig
from ..tensor import ParameterStore

logger = structlog.get_logger()


def adam_step(
    param: np.ndarray,
    grad: np.ndarray,
    m: np.ndarray,
    v: np.ndarray,
    step: int,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    name: str = "param",
) -> None:
    """One bias-corrected Adam update, in place on param, m and v.

    step counts from 1.
    """
    if not (param.shape == grad.shape == m.shape == v.shape):
        raise ShapeError(f"{name}: param {param.shape}, grad {grad.shape}, moments {m.shape}/{v.shape}")
    if not np.isfinite(grad).all():
        raise NonFiniteError("non-finite gradient", layer=name)

    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * np.square(grad)
    m_hat = m / (1.0 - beta1**step)
    v_hat = v / (1.0 - beta2**step)
    param -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(param.dtype, copy=False)


class Adam:
    """Adam over every tensor of a ParameterStore; moments are keyed by parameter name."""

    def __init__(
        self,
        params: ParameterStore,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = params
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}
        for name, tensor in params.items():
            self.m[name] = np.zeros_like(tensor.data)
            self.v[name] = np.zeros_like(tensor.data)

    @classmethod
    def from_config(cls, params: ParameterStore, config: TrainConfig) -> "Adam":
        return cls(params, beta1=config.adam_beta1, beta2=config.adam_beta2, eps=config.adam_eps)

    def step(self, lr: float) -> None:
        """Update every parameter, or none of them when any gradient is bad."""
        grads: Dict[str, np.ndarray] = {}
        for name, tensor in self.params.items():
            grad = np.zeros_like(tensor.data) if tensor.grad is None else tensor.grad
            if grad.shape != tensor.shape:
                raise ShapeError(f"{name}: param {tensor.shape}, grad {grad.shape}")
            if not np.isfinite(grad).all():
                raise NonFiniteError("non-finite gradient", layer=name)
            grads[name] = grad

        self.step_count += 1
        for name, tensor in self.params.items():
            grad = grads[name]
            if name not in self.m:
                self.m[name] = np.zeros_like(tensor.data)
                self.v[name] = np.zeros_like(tensor.data)
            adam_step(
                tensor.data,
                grad,
                self.m[name],
                self.v[name],
                self.step_count,
                lr,
                self.beta1,
                self.beta2,
                self.eps,
                name=name,
            )

    def zero_grad(self) -> None:
        self.params.zero_grad()

    def state(self) -> Tuple[int, Dict[str, np.ndarray], Dict[str, np.ndarray]]:
        return self.step_count, self.m, self.v

    def load_state(
        self, step_count: int, m: Dict[str, np.ndarray], v: Dict[str, np.ndarray]
    ) -> None:
        for name, tensor in self.params.items():
            for label, store in (("m", m), ("v", v)):
                if name not in store:
                    raise ShapeError(f"optimizer state has no {label} buffer for {name}")
                if store[name].shape != tensor.shape:
                    raise ShapeError(f"{name}: {label} buffer {store[name].shape} vs {tensor.shape}")
        self.step_count = step_count
        self.m = {name: m[name].astype(t.dtype, copy=True) for name, t in self.params.items()}
        self.v = {name: v[name].astype(t.dtype, copy=True) for name, t in self.params.items()}


def lr_schedule(iteration: int, config: TrainConfig) -> float:
    """λ0 times lr_decay for every boundary passed.

    Explicit lr_boundaries win; otherwise every lr_step_every iterations is a boundary.
    """
    if iteration < 0:
        raise ValueError(f"iteration must be non-negative, got {iteration}")
    halvings = _boundaries_passed(iteration, config.lr_boundaries, config.lr_step_every)
    return config.learning_rate * config.lr_decay**halvings


def _boundaries_passed(iteration: int, boundaries, step_every: Optional[int]) -> int:
    if boundaries:
        return sum(1 for boundary in boundaries if iteration >= boundary)
    if step_every:
        return iteration // step_every
    return 0
