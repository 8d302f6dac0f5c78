"""Dense float64 tensors recorded onto a reverse-mode computation record.

Operations performed while a :class:`ComputationRecord` is active append one
node per primitive; :func:`backward` walks the nodes in reverse and returns
the gradient of a scalar output for every parameter that took part. Outside
a record the same operations only compute values, which is what inference
uses.
"""

from __future__ import annotations

import contextvars
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from typing import Any

import numpy as np
import structlog

from harpbd.errors import ContractViolation, NumericalFailure

logger = structlog.get_logger()

BackwardFn = Callable[[np.ndarray], Sequence[np.ndarray | None]]

_active_record: contextvars.ContextVar[ComputationRecord | None] = contextvars.ContextVar(
    "harpbd_active_record", default=None
)


class Tensor:
    __slots__ = ("value", "requires_grad", "name", "is_parameter")

    def __init__(self, value: Any, requires_grad: bool = False, name: str | None = None):
        self.value = np.asarray(value, dtype=np.float64)
        self.requires_grad = requires_grad
        self.name = name
        self.is_parameter = False

    @classmethod
    def parameter(cls, value: Any, name: str) -> Tensor:
        tensor = cls(np.array(value, dtype=np.float64), requires_grad=True, name=name)
        tensor.is_parameter = True
        return tensor

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    @property
    def size(self) -> int:
        return self.value.size

    def item(self) -> float:
        if self.value.size != 1:
            raise ContractViolation(f"item() needs a single value, tensor has shape {self.shape}")
        return float(self.value.reshape(()))

    def __repr__(self) -> str:
        label = f"{self.name}, " if self.name else ""
        return f"Tensor({label}shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other: Any) -> Tensor:
        return add(self, other)

    def __radd__(self, other: Any) -> Tensor:
        return add(other, self)

    def __sub__(self, other: Any) -> Tensor:
        return sub(self, other)

    def __rsub__(self, other: Any) -> Tensor:
        return sub(other, self)

    def __mul__(self, other: Any) -> Tensor:
        return mul(self, other)

    def __rmul__(self, other: Any) -> Tensor:
        return mul(other, self)

    def __neg__(self) -> Tensor:
        return mul(self, -1.0)

    def __truediv__(self, other: float) -> Tensor:
        if isinstance(other, Tensor):
            return mul(self, power(other, -1.0))
        return mul(self, 1.0 / other)

    def __matmul__(self, other: Any) -> Tensor:
        return matmul(self, other)

    def __pow__(self, exponent: float) -> Tensor:
        return power(self, exponent)

    def __getitem__(self, index: Any) -> Tensor:
        return slice_(self, index)

    def sum(self, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
        return sum_(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape: int) -> Tensor:
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return reshape(self, shape)


@dataclass(frozen=True, slots=True)
class Node:
    op: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    backward: BackwardFn
    index: Any = None


class ComputationRecord:
    """Ordered primitive-operation nodes plus the parameters they touched."""

    def __init__(self) -> None:
        self.nodes: list[Node] = []
        self.params: dict[str, Tensor] = {}
        self._tokens: list[contextvars.Token] = []

    def __enter__(self) -> ComputationRecord:
        self._tokens.append(_active_record.set(self))
        return self

    def __exit__(self, exc_type, exc_val, exc_tb) -> None:
        _active_record.reset(self._tokens.pop())

    def __len__(self) -> int:
        return len(self.nodes)

    def append(self, node: Node) -> None:
        for tensor in node.inputs:
            if tensor.is_parameter:
                known = self.params.get(tensor.name)
                if known is None:
                    self.params[tensor.name] = tensor
                elif known is not tensor:
                    raise ContractViolation(f"two parameters share the name {tensor.name!r}")
        self.nodes.append(node)


def as_tensor(value: Any) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def _emit(op: str, inputs: Sequence[Tensor], value: np.ndarray, backward_fn: BackwardFn, index: Any = None) -> Tensor:
    value = np.asarray(value, dtype=np.float64)
    if not np.all(np.isfinite(value)):
        raise NumericalFailure(f"operation '{op}' produced non-finite values")
    out = Tensor(value)
    record = _active_record.get()
    if record is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        record.append(Node(op, tuple(inputs), out, backward_fn, index))
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def add(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g: np.ndarray):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _emit("add", (a, b), a.value + b.value, backward)


def sub(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g: np.ndarray):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _emit("sub", (a, b), a.value - b.value, backward)


def mul(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g: np.ndarray):
        ga = _unbroadcast(g * b.value, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.value, b.shape) if b.requires_grad else None
        return ga, gb

    return _emit("mul", (a, b), a.value * b.value, backward)


def matmul(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ContractViolation(f"matmul needs at least 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ContractViolation(f"matmul shape mismatch: {a.shape} @ {b.shape}")

    def backward(g: np.ndarray):
        ga = _unbroadcast(g @ np.swapaxes(b.value, -1, -2), a.shape) if a.requires_grad else None
        gb = _unbroadcast(np.swapaxes(a.value, -1, -2) @ g, b.shape) if b.requires_grad else None
        return ga, gb

    return _emit("matmul", (a, b), np.matmul(a.value, b.value), backward)


def tanh(x: Any) -> Tensor:
    x = as_tensor(x)
    y = np.tanh(x.value)
    return _emit("tanh", (x,), y, lambda g: (g * (1.0 - y * y),))


def sigmoid(x: Any) -> Tensor:
    x = as_tensor(x)
    y = 0.5 * (1.0 + np.tanh(0.5 * x.value))
    return _emit("sigmoid", (x,), y, lambda g: (g * y * (1.0 - y),))


def exp(x: Any) -> Tensor:
    x = as_tensor(x)
    with np.errstate(over="ignore"):
        y = np.exp(x.value)
    return _emit("exp", (x,), y, lambda g: (g * y,))


def log(x: Any) -> Tensor:
    x = as_tensor(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        y = np.log(x.value)
    return _emit("log", (x,), y, lambda g: (g / x.value,))


def relu(x: Any) -> Tensor:
    x = as_tensor(x)
    mask = x.value > 0.0
    return _emit("relu", (x,), np.where(mask, x.value, 0.0), lambda g: (g * mask,))


def softmax(x: Any, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    shifted = x.value - np.max(x.value, axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / np.sum(e, axis=axis, keepdims=True)

    def backward(g: np.ndarray):
        return (y * (g - np.sum(g * y, axis=axis, keepdims=True)),)

    return _emit("softmax", (x,), y, backward)


def power(x: Any, exponent: float) -> Tensor:
    x = as_tensor(x)
    exponent = float(exponent)
    with np.errstate(divide="ignore", invalid="ignore"):
        y = np.power(x.value, exponent)

    def backward(g: np.ndarray):
        if exponent == 0.0:
            return (np.zeros_like(g),)
        with np.errstate(divide="ignore", invalid="ignore"):
            local = exponent * np.power(x.value, exponent - 1.0)
        # base 0: derivative taken as 0
        local = np.where(x.value == 0.0, 0.0, local)
        return (g * local,)

    return _emit("power", (x,), y, backward)


def clip(x: Any, low: float, high: float) -> Tensor:
    x = as_tensor(x)
    inside = (x.value >= low) & (x.value <= high)
    return _emit("clip", (x,), np.clip(x.value, low, high), lambda g: (g * inside,))


def concat(tensors: Sequence[Any], axis: int = 0) -> Tensor:
    parts = [as_tensor(t) for t in tensors]
    if not parts:
        raise ContractViolation("concat needs at least one tensor")
    sizes = [p.shape[axis] for p in parts]
    bounds = np.cumsum(sizes)[:-1]

    def backward(g: np.ndarray):
        return tuple(np.split(g, bounds, axis=axis))

    return _emit("concat", parts, np.concatenate([p.value for p in parts], axis=axis), backward)


def _is_basic_index(index: Any) -> bool:
    parts = index if isinstance(index, tuple) else (index,)
    return all(
        isinstance(p, (int, np.integer, slice)) or p is None or p is Ellipsis for p in parts
    )


def _scatter_add(buffer: np.ndarray, index: Any, g: np.ndarray) -> None:
    if _is_basic_index(index):
        buffer[index] += g
    else:
        np.add.at(buffer, index, g)


def slice_(x: Any, index: Any) -> Tensor:
    x = as_tensor(x)

    def backward(g: np.ndarray):
        full = np.zeros_like(x.value)
        _scatter_add(full, index, g)
        return (full,)

    return _emit("slice", (x,), x.value[index], backward, index=index)


def sum_(x: Any, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    y = np.sum(x.value, axis=axis, keepdims=keepdims)

    def backward(g: np.ndarray):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _emit("sum", (x,), y, backward)


def reshape(x: Any, shape: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    original = x.shape
    return _emit("reshape", (x,), x.value.reshape(tuple(shape)), lambda g: (g.reshape(original),))


def backward(record: ComputationRecord, scalar_output: Tensor) -> dict[str, np.ndarray]:
    """Exact reverse-mode gradients of ``scalar_output`` for every parameter in ``record``.

    Parameters the output does not depend on get zero gradients.
    """
    if scalar_output.value.size != 1:
        raise ContractViolation(f"backward needs a scalar output, got shape {scalar_output.shape}")
    if not scalar_output.requires_grad:
        raise ContractViolation("output was not computed from any parameter inside this record")

    grads: dict[int, np.ndarray] = {id(scalar_output): np.ones_like(scalar_output.value)}
    owned: set[int] = {id(scalar_output)}

    for position in range(len(record.nodes) - 1, -1, -1):
        node = record.nodes[position]
        g = grads.pop(id(node.output), None)
        if g is None:
            continue

        if node.op == "slice":
            parent = node.inputs[0]
            if not parent.requires_grad:
                continue
            key = id(parent)
            buffer = grads.get(key)
            if buffer is None:
                buffer = np.zeros_like(parent.value)
            elif key not in owned:
                buffer = buffer.copy()
            _scatter_add(buffer, node.index, g)
            grads[key] = buffer
            owned.add(key)
            continue

        for tensor, grad in zip(node.inputs, node.backward(g)):
            if grad is None or not tensor.requires_grad:
                continue
            if not np.all(np.isfinite(grad)):
                raise NumericalFailure(
                    f"non-finite gradient at node {position} ('{node.op}')"
                )
            key = id(tensor)
            if key in grads:
                grads[key] = grads[key] + grad
                owned.add(key)
            else:
                grads[key] = grad
                owned.discard(key)

    return {
        name: np.array(grads.get(id(param), np.zeros_like(param.value)), dtype=np.float64).reshape(
            param.shape
        )
        for name, param in record.params.items()
    }
