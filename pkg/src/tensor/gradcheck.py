"""Central finite-difference oracle for tape gradients."""

from typing import Callable, Sequence

import numpy as np

from ..shared.schemas import GradCheckResult
from .core import Tape, Tensor, backward, constant
from .ops import mul, sum_all


def gradcheck(
    fn: Callable[..., Tensor],
    inputs: Sequence[Tensor],
    name: str = "op",
    eps: float = 1e-4,
    tolerance: float = 1e-5,
    seed: int = 0,
) -> GradCheckResult:
    """Compare tape gradients of fn against central differences.

    The output is projected onto a fixed random tensor so every output element
    contributes. Error is max |analytic - numeric| / max(|analytic|, |numeric|)
    over all differentiable inputs. Use float64 inputs.
    """
    rng = np.random.default_rng(seed)

    with Tape() as tape:
        out = fn(*inputs)
        projection = constant(rng.standard_normal(out.shape).astype(out.dtype))
        loss = sum_all(mul(out, projection))
    for tensor in inputs:
        tensor.grad = None
    backward(loss, tape)

    def objective() -> float:
        return float(np.sum(fn(*inputs).data * projection.data))

    worst = 0.0
    for tensor in inputs:
        if not tensor.requires_grad:
            continue
        analytic = tensor.grad if tensor.grad is not None else np.zeros_like(tensor.data)
        numeric = np.zeros_like(tensor.data)
        flat = tensor.data.reshape(-1)
        for index in range(flat.size):
            saved = flat[index]
            flat[index] = saved + eps
            plus = objective()
            flat[index] = saved - eps
            minus = objective()
            flat[index] = saved
            numeric.reshape(-1)[index] = (plus - minus) / (2 * eps)
        scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0), 1e-12)
        worst = max(worst, float(np.abs(analytic - numeric).max(initial=0.0) / scale))

    return GradCheckResult(name=name, max_relative_error=worst, tolerance=tolerance)


def random_tensor(
    rng: np.random.Generator, shape, requires_grad: bool = True, low: float = -1.0, high: float = 1.0
) -> Tensor:
    """Uniform float64 tensor for gradient checks."""
    return Tensor(rng.uniform(low, high, size=shape), requires_grad=requires_grad, dtype=np.float64)
