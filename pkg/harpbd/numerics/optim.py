from collections.abc import Mapping
from dataclasses import dataclass, field, replace

import numpy as np
import structlog

from harpbd.errors import ContractViolation
from harpbd.numerics.tensor import Tensor

logger = structlog.get_logger()


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.lr <= 0:
            raise ContractViolation(f"Adam learning rate must be positive, got {self.lr}")


def adam_step(
    params: Mapping[str, np.ndarray],
    gradients: Mapping[str, np.ndarray],
    state: AdamState,
) -> tuple[dict[str, np.ndarray], AdamState]:
    """One bias-corrected Adam update. Inputs are left untouched."""
    if set(params) != set(gradients):
        raise ContractViolation(
            f"parameter and gradient names differ: {sorted(set(params) ^ set(gradients))}"
        )

    t = state.t + 1
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t

    new_params: dict[str, np.ndarray] = {}
    new_m: dict[str, np.ndarray] = {}
    new_v: dict[str, np.ndarray] = {}
    for name, value in params.items():
        g = np.asarray(gradients[name], dtype=np.float64)
        if g.shape != value.shape:
            raise ContractViolation(f"gradient for {name} has shape {g.shape}, expected {value.shape}")
        m = state.m.get(name, np.zeros_like(value))
        v = state.v.get(name, np.zeros_like(value))
        if m.shape != value.shape or v.shape != value.shape:
            raise ContractViolation(f"Adam moments for {name} do not match shape {value.shape}")

        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        new_params[name] = value - state.lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
        new_m[name] = m
        new_v[name] = v

    return new_params, replace(state, t=t, m=new_m, v=new_v)


class Adam:
    """Adam bound to a set of named parameter tensors."""

    def __init__(self, params: Mapping[str, Tensor], lr: float, **hyper: float):
        self.params = dict(params)
        self.state = AdamState(lr=lr, **hyper)

    def step(self, gradients: Mapping[str, np.ndarray]) -> None:
        current = {name: tensor.value for name, tensor in self.params.items()}
        grads = {name: gradients.get(name, np.zeros_like(value)) for name, value in current.items()}
        updated, self.state = adam_step(current, grads, self.state)
        for name, tensor in self.params.items():
            tensor.value = updated[name]
