"""Graph convolution, forward LSTM, dropout and the dense softmax head."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from harpbd.errors import ContractViolation
from harpbd.graph import BodyGraph
from harpbd.numerics.tensor import (
    Tensor,
    as_tensor,
    concat,
    matmul,
    reshape,
    sigmoid,
    softmax,
    tanh,
)

GCMode = Literal["single", "partitioned"]


def glorot_uniform(
    rng: np.random.Generator, fan_in: int, fan_out: int, shape: tuple[int, ...] | None = None
) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape or (fan_in, fan_out))


@dataclass
class GCLayerParams:
    mode: GCMode
    weight: Tensor | None = None
    weight_self: Tensor | None = None
    weight_neighbor: Tensor | None = None

    @property
    def in_channels(self) -> int:
        return self._reference.shape[0]

    @property
    def _reference(self) -> Tensor:
        reference = self.weight if self.mode == "single" else self.weight_self
        if reference is None:
            raise ContractViolation(f"{self.mode} graph convolution is missing its weights")
        return reference

    def tensors(self) -> list[Tensor]:
        if self.mode == "single":
            return [self._reference]
        return [t for t in (self.weight_self, self.weight_neighbor) if t is not None]

    @classmethod
    def init(
        cls, rng: np.random.Generator, c_in: int, c_out: int, mode: GCMode, name: str
    ) -> GCLayerParams:
        if mode == "single":
            return cls(mode, weight=Tensor.parameter(glorot_uniform(rng, c_in, c_out), f"{name}.W"))
        return cls(
            mode,
            weight_self=Tensor.parameter(glorot_uniform(rng, c_in, c_out), f"{name}.W_self"),
            weight_neighbor=Tensor.parameter(glorot_uniform(rng, c_in, c_out), f"{name}.W_neighbor"),
        )


@dataclass
class LSTMLayerParams:
    w_input: Tensor
    w_forget: Tensor
    w_cell: Tensor
    w_output: Tensor
    b_input: Tensor
    b_forget: Tensor
    b_cell: Tensor
    b_output: Tensor

    @property
    def hidden_size(self) -> int:
        return self.w_input.shape[1]

    @property
    def input_size(self) -> int:
        return self.w_input.shape[0] - self.hidden_size

    def tensors(self) -> list[Tensor]:
        return [
            self.w_input,
            self.w_forget,
            self.w_cell,
            self.w_output,
            self.b_input,
            self.b_forget,
            self.b_cell,
            self.b_output,
        ]

    @classmethod
    def init(cls, rng: np.random.Generator, d_in: int, hidden: int, name: str) -> LSTMLayerParams:
        def gate(tag: str) -> Tensor:
            return Tensor.parameter(glorot_uniform(rng, d_in + hidden, hidden), f"{name}.W_{tag}")

        def bias(tag: str, value: float) -> Tensor:
            return Tensor.parameter(np.full(hidden, value), f"{name}.b_{tag}")

        return cls(
            w_input=gate("i"),
            w_forget=gate("f"),
            w_cell=gate("c"),
            w_output=gate("o"),
            b_input=bias("i", 0.0),
            b_forget=bias("f", 1.0),
            b_cell=bias("c", 0.0),
            b_output=bias("o", 0.0),
        )


@dataclass
class HeadParams:
    weight: Tensor
    bias: Tensor

    @property
    def n_classes(self) -> int:
        return self.weight.shape[1]

    def tensors(self) -> list[Tensor]:
        return [self.weight, self.bias]

    @classmethod
    def init(cls, rng: np.random.Generator, hidden: int, n_classes: int, name: str) -> HeadParams:
        return cls(
            weight=Tensor.parameter(glorot_uniform(rng, hidden, n_classes), f"{name}.W"),
            bias=Tensor.parameter(np.zeros(n_classes), f"{name}.b"),
        )


def gc_forward(x: Tensor | np.ndarray, graph: BodyGraph, params: GCLayerParams) -> Tensor:
    """Graph convolution over the node axis (-2) of ``x``."""
    x = as_tensor(x)
    if x.ndim < 2 or x.shape[-2] != graph.node_count:
        raise ContractViolation(
            f"graph convolution expects {graph.node_count} nodes on axis -2, got shape {x.shape}"
        )
    if x.shape[-1] != params.in_channels:
        raise ContractViolation(
            f"graph convolution expects {params.in_channels} input channels, got {x.shape[-1]}"
        )

    if params.mode == "single":
        return matmul(Tensor(graph.propagation), matmul(x, params.weight))

    self_term = matmul(x, params.weight_self)
    neighbor_term = matmul(Tensor(graph.neighbor_mean), matmul(x, params.weight_neighbor))
    return self_term + neighbor_term


def lstm_forward(seq: Tensor | np.ndarray, params: LSTMLayerParams) -> tuple[Tensor, Tensor]:
    """Run the recurrence over axis -2; returns (all hidden states, final hidden state)."""
    seq = as_tensor(seq)
    unbatched = seq.ndim == 2
    if unbatched:
        seq = reshape(seq, (1, *seq.shape))
    if seq.ndim != 3 or seq.shape[1] < 1:
        raise ContractViolation(f"LSTM input must be (T, D) or (B, T, D) with T >= 1, got {seq.shape}")
    batch, steps, d_in = seq.shape
    if d_in != params.input_size:
        raise ContractViolation(f"LSTM expects input size {params.input_size}, got {d_in}")
    hidden = params.hidden_size

    weights = concat([params.w_input, params.w_forget, params.w_cell, params.w_output], axis=1)
    bias = concat([params.b_input, params.b_forget, params.b_cell, params.b_output], axis=0)
    w_x = weights[:d_in]
    w_h = weights[d_in:]
    projected = matmul(seq, w_x) + bias

    h = Tensor(np.zeros((batch, hidden)))
    c = Tensor(np.zeros((batch, hidden)))
    states = []
    for t in range(steps):
        z = projected[:, t, :] + matmul(h, w_h)
        i = sigmoid(z[:, :hidden])
        f = sigmoid(z[:, hidden : 2 * hidden])
        g = tanh(z[:, 2 * hidden : 3 * hidden])
        o = sigmoid(z[:, 3 * hidden :])
        c = f * c + i * g
        h = o * tanh(c)
        states.append(reshape(h, (batch, 1, hidden)))

    all_states = concat(states, axis=1)
    if unbatched:
        return reshape(all_states, (steps, hidden)), reshape(h, (hidden,))
    return all_states, h


def dropout(
    x: Tensor | np.ndarray, p: float = 0.5, training: bool = False, rng: np.random.Generator | None = None
) -> Tensor:
    if not 0.0 <= p < 1.0:
        raise ContractViolation(f"dropout probability must lie in [0, 1), got {p}")
    x = as_tensor(x)
    if not training or p == 0.0:
        return x
    if rng is None:
        raise ContractViolation("training-mode dropout needs a random generator")
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return x * mask


def dense_softmax(h: Tensor | np.ndarray, params: HeadParams) -> Tensor:
    h = as_tensor(h)
    if h.shape[-1] != params.weight.shape[0]:
        raise ContractViolation(
            f"head expects hidden size {params.weight.shape[0]}, got {h.shape[-1]}"
        )
    squeeze = h.ndim == 1
    if squeeze:
        h = reshape(h, (1, h.shape[0]))
    probs = softmax(matmul(h, params.weight) + params.bias, axis=-1)
    return reshape(probs, (params.n_classes,)) if squeeze else probs
