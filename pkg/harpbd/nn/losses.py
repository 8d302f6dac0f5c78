"""Cross-entropy, focal factor, class-balanced weights and their product (CFCC).

Every loss returns the sum over frames: a single (K,) prediction gives a
scalar, a (B, K) batch gives the batch total.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict, Field

from harpbd.errors import ContractViolation
from harpbd.numerics.tensor import Tensor, as_tensor, clip, log, power, sum_

logger = structlog.get_logger()

PROBABILITY_CLAMP = 1e-7


class LossConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    gamma: float = Field(default=0.0, ge=0.0)
    beta: float = Field(default=0.0, ge=0.0, lt=1.0)
    clamp: float = Field(default=PROBABILITY_CLAMP, gt=0.0, lt=1.0)
    focal: bool = True
    class_balanced: bool = True

    def plain(self) -> LossConfig:
        return self.model_copy(update={"focal": False, "class_balanced": False})


@dataclass(frozen=True)
class ClassCounts:
    counts: tuple[int, ...]

    def __post_init__(self) -> None:
        if any(n < 1 for n in self.counts):
            raise ContractViolation(f"class counts must be >= 1, got {self.counts}")

    @classmethod
    def from_labels(cls, labels: Sequence[int] | np.ndarray, n_classes: int) -> ClassCounts:
        raw = np.bincount(np.asarray(labels, dtype=np.int64), minlength=n_classes)
        missing = [k for k in range(n_classes) if raw[k] == 0]
        if missing:
            logger.warning("Classes absent from training split, counts clamped to 1", classes=missing)
        return cls(tuple(int(max(n, 1)) for n in raw))


def one_hot(labels: Sequence[int] | np.ndarray | int, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    return np.eye(n_classes)[labels]


def _p_truth(probs: Tensor, y: np.ndarray) -> Tensor:
    if probs.shape != y.shape:
        raise ContractViolation(f"predictions {probs.shape} and one-hot targets {y.shape} differ")
    return sum_(probs * y, axis=-1)


def _frame_cce(probs: Tensor, y: np.ndarray, clamp: float) -> Tensor:
    return -log(clip(_p_truth(probs, y), clamp, 1.0))


def cce(probs: Tensor | np.ndarray, y: np.ndarray, clamp: float = PROBABILITY_CLAMP) -> Tensor:
    return sum_(_frame_cce(as_tensor(probs), np.asarray(y, dtype=np.float64), clamp))


def focal_factor(probs: Tensor | np.ndarray, y: np.ndarray, gamma: float) -> Tensor:
    """Per-frame (1 - p_truth) ** gamma."""
    if gamma < 0:
        raise ContractViolation(f"focal gamma must be >= 0, got {gamma}")
    return power(1.0 - _p_truth(as_tensor(probs), np.asarray(y, dtype=np.float64)), gamma)


def cb_weight(n: int, beta: float) -> float:
    """(1 - beta) / (1 - beta ** n), evaluated without cancellation."""
    if n < 1:
        raise ContractViolation(f"class count must be >= 1, got {n}")
    if not 0.0 <= beta < 1.0:
        raise ContractViolation(f"beta must lie in [0, 1), got {beta}")
    if beta == 0.0:
        return 1.0
    d = 1.0 - beta
    return d / -math.expm1(n * math.log1p(-d))


def class_weights(counts: ClassCounts, beta: float) -> np.ndarray:
    return np.array([cb_weight(n, beta) for n in counts.counts])


def cfcc(
    probs: Tensor | np.ndarray, y: np.ndarray, counts: ClassCounts, config: LossConfig
) -> Tensor:
    probs = as_tensor(probs)
    y = np.asarray(y, dtype=np.float64)
    if y.shape[-1] != len(counts.counts):
        raise ContractViolation(f"{len(counts.counts)} class counts for {y.shape[-1]} classes")

    per_frame = _frame_cce(probs, y, config.clamp)
    if config.focal:
        per_frame = focal_factor(probs, y, config.gamma) * per_frame
    if config.class_balanced:
        per_frame = per_frame * (y @ class_weights(counts, config.beta))
    return sum_(per_frame)
