"""HAR and PBD GC-LSTM modules and the hierarchical label injection."""

from __future__ import annotations

from collections.abc import Iterator
from dataclasses import dataclass
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from harpbd.errors import ContractViolation
from harpbd.graph import BodyGraph
from harpbd.nn.layers import (
    GCLayerParams,
    GCMode,
    HeadParams,
    LSTMLayerParams,
    dense_softmax,
    dropout,
    gc_forward,
    lstm_forward,
)
from harpbd.numerics.tensor import Tensor, as_tensor, concat, relu, reshape

RAW_CHANNELS = 3
HAR_CLASSES = 6
PBD_CLASSES = 2

Role = Literal["HAR", "PBD"]


class ModelSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    role: Role = "HAR"
    gc_layers: int = Field(default=1, ge=1)
    gc_kernels: int = Field(default=26, ge=1)
    gc_mode: GCMode = "single"
    lstm_layers: int = Field(default=3, ge=1)
    lstm_hidden: int = Field(default=24, ge=1)
    n_classes: int = Field(default=HAR_CLASSES, ge=2)
    dropout: float = Field(default=0.5, ge=0.0, lt=1.0)
    in_channels: int = Field(default=RAW_CHANNELS, ge=1)

    @model_validator(mode="after")
    def classes_match_role(self) -> ModelSpec:
        expected = HAR_CLASSES if self.role == "HAR" else PBD_CLASSES
        if self.n_classes != expected:
            raise ValueError(f"{self.role} head has {expected} classes, got {self.n_classes}")
        return self

    @classmethod
    def har(cls, **overrides) -> ModelSpec:
        return cls(**{"role": "HAR", "gc_layers": 1, "gc_kernels": 26, "n_classes": HAR_CLASSES, **overrides})

    @classmethod
    def pbd(cls, hierarchical: bool = True, **overrides) -> ModelSpec:
        channels = RAW_CHANNELS + (HAR_CLASSES if hierarchical else 0)
        return cls(
            **{
                "role": "PBD",
                "gc_layers": 3,
                "gc_kernels": 16,
                "n_classes": PBD_CLASSES,
                "in_channels": channels,
                **overrides,
            }
        )


@dataclass
class ModelParams:
    spec: ModelSpec
    node_count: int
    gc: list[GCLayerParams]
    lstm: list[LSTMLayerParams]
    head: HeadParams

    def tensors(self) -> Iterator[Tensor]:
        for layer in self.gc:
            yield from layer.tensors()
        for layer in self.lstm:
            yield from layer.tensors()
        yield from self.head.tensors()

    def named(self) -> dict[str, Tensor]:
        return {t.name: t for t in self.tensors()}  # type: ignore[misc]

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: t.value.copy() for name, t in self.named().items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        named = self.named()
        if set(named) != set(arrays):
            raise ContractViolation(
                f"parameter names differ from checkpoint: {sorted(set(named) ^ set(arrays))}"
            )
        for name, tensor in named.items():
            value = np.asarray(arrays[name], dtype=np.float64)
            if value.shape != tensor.shape:
                raise ContractViolation(f"{name}: checkpoint shape {value.shape} != {tensor.shape}")
            tensor.value = value.copy()

    @classmethod
    def init(
        cls, spec: ModelSpec, node_count: int, rng: np.random.Generator, prefix: str | None = None
    ) -> ModelParams:
        prefix = prefix or spec.role.lower()
        gc = []
        c_in = spec.in_channels
        for k in range(spec.gc_layers):
            gc.append(GCLayerParams.init(rng, c_in, spec.gc_kernels, spec.gc_mode, f"{prefix}.gc{k}"))
            c_in = spec.gc_kernels
        lstm = []
        d_in = node_count * spec.gc_kernels
        for k in range(spec.lstm_layers):
            lstm.append(LSTMLayerParams.init(rng, d_in, spec.lstm_hidden, f"{prefix}.lstm{k}"))
            d_in = spec.lstm_hidden
        head = HeadParams.init(rng, spec.lstm_hidden, spec.n_classes, f"{prefix}.head")
        return cls(spec=spec, node_count=node_count, gc=gc, lstm=lstm, head=head)


def _batched(x: Tensor) -> tuple[Tensor, bool]:
    if x.ndim == 3:
        return reshape(x, (1, *x.shape)), True
    if x.ndim != 4:
        raise ContractViolation(f"expected a (T, N, C) window or (B, T, N, C) batch, got {x.shape}")
    return x, False


def module_forward(
    x: Tensor | np.ndarray,
    graph: BodyGraph,
    params: ModelParams,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """GC stack per timestep, node concatenation, LSTM stack, final-state softmax."""
    h, single = _batched(as_tensor(x))
    if h.shape[2] != graph.node_count or graph.node_count != params.node_count:
        raise ContractViolation(
            f"input has {h.shape[2]} nodes, graph {graph.node_count}, model {params.node_count}"
        )
    if h.shape[3] != params.spec.in_channels:
        raise ContractViolation(
            f"{params.spec.role} expects {params.spec.in_channels} channels, got {h.shape[3]}"
        )
    p = params.spec.dropout
    for layer in params.gc:
        h = dropout(relu(gc_forward(h, graph, layer)), p, training, rng)

    batch, steps, nodes, channels = h.shape
    seq = reshape(h, (batch, steps, nodes * channels))
    for layer in params.lstm:
        states, _ = lstm_forward(seq, layer)
        seq = dropout(states, p, training, rng)

    probs = dense_softmax(seq[:, steps - 1, :], params.head)
    return reshape(probs, (params.spec.n_classes,)) if single else probs


def hard_labels(probs: Tensor | np.ndarray) -> np.ndarray:
    """One-hot of the argmax; exact ties go to the lowest index."""
    values = probs.value if isinstance(probs, Tensor) else np.asarray(probs)
    return np.eye(values.shape[-1])[np.argmax(values, axis=-1)]


def har_forward(
    window: Tensor | np.ndarray,
    graph: BodyGraph,
    params: ModelParams,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[Tensor, np.ndarray]:
    probs = module_forward(window, graph, params, training, rng)
    return probs, hard_labels(probs)


def hierarchical_input(window: Tensor | np.ndarray, label_vector: Tensor | np.ndarray) -> Tensor:
    """Append the activity label vector to every node at every timestep."""
    window = as_tensor(window)
    label = as_tensor(label_vector)
    if window.ndim == 3:
        if label.ndim != 1:
            raise ContractViolation(f"single window needs a label vector, got {label.shape}")
        steps, nodes, _ = window.shape
        spread = reshape(label, (1, 1, label.shape[0])) * np.ones((steps, nodes, 1))
    elif window.ndim == 4:
        batch, steps, nodes, _ = window.shape
        if label.shape[:-1] != (batch,):
            raise ContractViolation(f"batch of {batch} windows needs {batch} label vectors, got {label.shape}")
        spread = reshape(label, (batch, 1, 1, label.shape[-1])) * np.ones((1, steps, nodes, 1))
    else:
        raise ContractViolation(f"expected a (T, N, C) window or (B, T, N, C) batch, got {window.shape}")
    return concat([window, spread], axis=-1)


def pbd_forward(
    window: Tensor | np.ndarray,
    har_output: Tensor | np.ndarray | None,
    graph: BodyGraph,
    pbd_params: ModelParams,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[Tensor, np.ndarray]:
    """``har_output`` is None for the non-hierarchical PBD module."""
    x = window if har_output is None else hierarchical_input(window, har_output)
    probs = module_forward(x, graph, pbd_params, training, rng)
    return probs, hard_labels(probs)
