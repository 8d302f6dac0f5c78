from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from harpbd.data.trials import N_ACTIVITIES, N_RATERS, Trial
from harpbd.errors import ContractViolation

WINDOW_LENGTH = 180
WINDOW_STRIDE = 90
MIN_AGREEING_RATERS = 2
RATER_SHARE = 0.5


class WindowConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    length: int = Field(default=WINDOW_LENGTH, gt=0)
    stride: int = Field(default=WINDOW_STRIDE, gt=0)
    center: bool = False

    @model_validator(mode="after")
    def stride_within_window(self) -> WindowConfig:
        if self.stride > self.length:
            raise ValueError(f"stride {self.stride} exceeds window length {self.length}")
        return self


@dataclass(frozen=True, eq=False)
class WindowSample:
    features: np.ndarray
    activity_label: int
    protective_label: bool
    subject_id: str
    trial_kind: str
    window_start: int
    is_augmented: bool = False

    @property
    def window_id(self) -> tuple[str, str, int]:
        return (self.subject_id, self.trial_kind, self.window_start)

    def with_features(self, features: np.ndarray) -> WindowSample:
        return replace(self, features=features, is_augmented=True)


def window_count(length: int, window: int, stride: int) -> int:
    if length < window:
        return 0
    return (length - window) // stride + 1


def majority_activity_label(activity: np.ndarray) -> int:
    counts = np.bincount(np.asarray(activity, dtype=np.int64), minlength=N_ACTIVITIES)
    # argmax returns the first maximum: ties go to the lowest class id
    return int(np.argmax(counts))


def protective_label(rater_flags: np.ndarray) -> bool:
    flags = np.asarray(rater_flags, dtype=bool)
    if flags.ndim != 2 or flags.shape[1] != N_RATERS:
        raise ContractViolation(f"rater flags must be (T, {N_RATERS}), got {flags.shape}")
    threshold = math.ceil(RATER_SHARE * flags.shape[0])
    agreeing = int(np.count_nonzero(flags.sum(axis=0) >= threshold))
    return agreeing >= MIN_AGREEING_RATERS


def segment(
    trial: Trial,
    window: int = WINDOW_LENGTH,
    stride: int = WINDOW_STRIDE,
    center: bool = False,
) -> list[WindowSample]:
    if window <= 0 or not 0 < stride <= window:
        raise ContractViolation(f"invalid window {window} / stride {stride}")

    samples = []
    for k in range(window_count(trial.length, window, stride)):
        start = k * stride
        stop = start + window
        features = trial.frames[start:stop].copy()
        if center:
            features -= features.mean(axis=(0, 1), keepdims=True)
        samples.append(
            WindowSample(
                features=features,
                activity_label=majority_activity_label(trial.activity[start:stop]),
                protective_label=protective_label(trial.rater_flags[start:stop]),
                subject_id=trial.subject_id,
                trial_kind=trial.trial_kind,
                window_start=start,
            )
        )
    return samples


def segment_with(trial: Trial, config: WindowConfig) -> list[WindowSample]:
    return segment(trial, config.length, config.stride, config.center)
