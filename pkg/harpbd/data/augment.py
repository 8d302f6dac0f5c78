from __future__ import annotations

from collections.abc import Sequence

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict, Field, field_validator

from harpbd.data.windows import WindowSample
from harpbd.errors import ContractViolation
from harpbd.numerics import derive_rng

logger = structlog.get_logger()


class AugmentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    enabled: bool = True
    jitter_sigmas: list[float] = Field(default_factory=lambda: [0.05, 0.1])
    crop_probs: list[float] = Field(default_factory=lambda: [0.05, 0.10])

    @field_validator("jitter_sigmas")
    @classmethod
    def non_negative_sigmas(cls, v: list[float]) -> list[float]:
        if any(sigma < 0 for sigma in v):
            raise ValueError("jitter sigmas must be >= 0")
        return v

    @field_validator("crop_probs")
    @classmethod
    def probabilities(cls, v: list[float]) -> list[float]:
        if any(not 0 <= p <= 1 for p in v):
            raise ValueError("crop probabilities must lie in [0, 1]")
        return v


def jitter(features: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    return features + rng.normal(0.0, sigma, size=features.shape)


def crop(features: np.ndarray, p: float, rng: np.random.Generator) -> np.ndarray:
    """Zero whole (timestep, joint) coordinate triplets with probability ``p``."""
    keep = rng.random(features.shape[:-1]) >= p
    return features * keep[..., None]


def augment(
    train_windows: Sequence[WindowSample],
    jitter_sigmas: Sequence[float] = (0.05, 0.1),
    crop_probs: Sequence[float] = (0.05, 0.10),
    seed: int | np.random.Generator = 0,
) -> list[WindowSample]:
    """Originals followed by one jittered copy per sigma and one cropped copy per probability."""
    rng = seed if isinstance(seed, np.random.Generator) else derive_rng(seed, "augment")
    for window in train_windows:
        if window.is_augmented:
            raise ContractViolation("augment expects original windows only")

    jittered = [
        window.with_features(jitter(window.features, sigma, rng))
        for sigma in jitter_sigmas
        for window in train_windows
    ]
    cropped = [
        window.with_features(crop(window.features, p, rng))
        for p in crop_probs
        for window in train_windows
    ]
    result = [*train_windows, *jittered, *cropped]
    logger.debug("Augmented windows", originals=len(train_windows), total=len(result))
    return result
