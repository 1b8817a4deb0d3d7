"""Adam with coupled L2 weight decay."""
import dataclasses
from collections.abc import Iterable

import numpy as np

from eam_classifier.autodiff import Parameter

BETA1 = 0.9
BETA2 = 0.999
EPSILON = 1e-8


class NonFiniteGradientError(FloatingPointError):
    """Raised when a parameter receives a NaN or infinite gradient."""

    def __init__(self, name: str):
        self.name = name
        super().__init__(f"Non-finite gradient for parameter '{name}'")


@dataclasses.dataclass
class AdamState:
    """First and second moments per parameter name, and the step count."""
    m: dict[str, np.ndarray] = dataclasses.field(default_factory=dict)
    v: dict[str, np.ndarray] = dataclasses.field(default_factory=dict)
    t: int = 0
    beta1: float = BETA1
    beta2: float = BETA2
    eps: float = EPSILON


def adam_step(params: Iterable[Parameter],
              state: AdamState,
              lr: float,
              weight_decay: float = 0.0) -> None:
    """One bias-corrected Adam update of every parameter, in place.

    Weight decay is added to the gradient (grad += wd * param) before the
    moment updates. Parameters without a gradient are treated as having a
    zero gradient. All gradients are validated before any value changes.
    """
    params = list(params)
    for param in params:
        if param.grad is not None and not np.all(np.isfinite(param.grad)):
            raise NonFiniteGradientError(param.name)

    state.t += 1
    correction1 = 1.0 - state.beta1**state.t
    correction2 = 1.0 - state.beta2**state.t

    for param in params:
        grad = param.grad
        if grad is None:
            grad = np.zeros_like(param.value)
        if weight_decay:
            grad = grad + weight_decay * param.value

        m = state.m.get(param.name)
        if m is None:
            m = state.m[param.name] = np.zeros_like(param.value)
            state.v[param.name] = np.zeros_like(param.value)
        v = state.v[param.name]

        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * grad * grad

        m_hat = m / correction1
        v_hat = v / correction2
        param.value -= lr * m_hat / (np.sqrt(v_hat) + state.eps)
