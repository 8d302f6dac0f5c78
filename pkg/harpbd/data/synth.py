"""Seeded synthetic motion-capture corpora.

Each activity class drives the five joint groups with its own sinusoid
(amplitude, frequency, direction). Protective spans inside activity bouts
compress the range of the trunk and arms and delay their phase. Four rater
streams copy the protective ground truth with independent flip noise.
"""

from __future__ import annotations

import math
from collections.abc import Sequence

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict, Field

from harpbd.data.trials import N_JOINTS, N_RATERS, SAMPLE_RATE, TRIAL_KINDS, Trial
from harpbd.errors import ConfigurationError
from harpbd.numerics import derive_rng

logger = structlog.get_logger()

REST_POSE = np.array(
    [
        [0.00, 1.00, 0.00],  # 1 hips
        [-0.18, 1.45, 0.00],  # 2 left shoulder
        [-0.20, 1.18, 0.00],
        [-0.22, 0.93, 0.00],
        [0.08, 1.47, 0.00],  # 5 right collar
        [0.18, 1.45, 0.00],
        [0.20, 1.18, 0.00],
        [0.22, 0.93, 0.00],
        [0.00, 1.65, 0.00],  # 9 head
        [-0.10, 0.95, 0.00],  # 10 left hip
        [-0.10, 0.52, 0.00],
        [-0.10, 0.10, 0.00],
        [-0.10, 0.03, 0.08],
        [-0.10, 0.00, 0.16],
        [0.10, 0.95, 0.00],  # 15 right hip
        [0.10, 0.52, 0.00],
        [0.10, 0.10, 0.00],
        [0.10, 0.03, 0.08],
        [0.10, 0.00, 0.16],
        [0.00, 1.15, 0.00],  # 20 spine
        [0.00, 1.30, 0.00],
        [0.00, 1.50, 0.00],  # 22 neck
    ]
)

# joint ids ordered proximal to distal
JOINT_GROUPS: dict[str, tuple[int, ...]] = {
    "trunk": (1, 20, 21, 22, 9),
    "left_arm": (2, 3, 4),
    "right_arm": (5, 6, 7, 8),
    "left_leg": (10, 11, 12, 13, 14),
    "right_leg": (15, 16, 17, 18, 19),
}
GUARDED_GROUPS = ("trunk", "left_arm", "right_arm")

_AXES = {"x": (1.0, 0.0, 0.0), "y": (0.0, 1.0, 0.0), "z": (0.0, 0.0, 1.0), "yz": (0.0, 0.7071, 0.7071)}

# class -> group -> (amplitude m, frequency Hz, direction)
TEMPLATES: dict[int, dict[str, tuple[float, float, str]]] = {
    0: {
        "trunk": (0.03, 0.9, "y"),
        "left_arm": (0.08, 0.9, "z"),
        "right_arm": (0.08, 0.9, "z"),
        "left_leg": (0.12, 0.9, "z"),
        "right_leg": (0.12, 0.9, "z"),
    },
    1: {
        "trunk": (0.04, 0.25, "x"),
        "left_arm": (0.10, 0.25, "x"),
        "right_arm": (0.10, 0.25, "x"),
        "left_leg": (0.30, 0.25, "y"),
        "right_leg": (0.02, 0.25, "y"),
    },
    2: {
        "trunk": (0.15, 0.3, "z"),
        "left_arm": (0.40, 0.3, "z"),
        "right_arm": (0.40, 0.3, "z"),
        "left_leg": (0.02, 0.3, "z"),
        "right_leg": (0.02, 0.3, "z"),
    },
    3: {
        "trunk": (0.35, 0.2, "y"),
        "left_arm": (0.10, 0.2, "z"),
        "right_arm": (0.10, 0.2, "z"),
        "left_leg": (0.25, 0.2, "z"),
        "right_leg": (0.25, 0.2, "z"),
    },
    4: {
        "trunk": (0.35, 0.45, "yz"),
        "left_arm": (0.15, 0.45, "y"),
        "right_arm": (0.15, 0.45, "y"),
        "left_leg": (0.25, 0.45, "yz"),
        "right_leg": (0.25, 0.45, "yz"),
    },
    5: {
        "trunk": (0.50, 0.3, "yz"),
        "left_arm": (0.45, 0.3, "y"),
        "right_arm": (0.45, 0.3, "y"),
        "left_leg": (0.05, 0.3, "z"),
        "right_leg": (0.05, 0.3, "z"),
    },
}
AOI_CLASSES = (1, 2, 3, 4, 5)


class SynthConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    subjects: int = Field(default=12, ge=1)
    healthy_subjects: int = Field(default=4, ge=0)
    trials_per_subject: int = Field(default=1, ge=1, le=len(TRIAL_KINDS))
    sequence_seconds: float = Field(default=120.0, gt=0)
    aoi_fraction: float = 0.3171
    protective_prevalence: float = 0.2109
    rater_noise: float = Field(default=0.02, ge=0, le=0.5)
    bout_seconds: float = Field(default=5.0, gt=0)
    sensor_noise: float = Field(default=0.005, ge=0)
    protective_compression: float = Field(default=0.45, gt=0, le=1)
    difficult_compression: float = Field(default=0.3, gt=0, le=1)
    protective_lag: float = Field(default=math.pi / 3, ge=0)

    @property
    def sequence_length(self) -> int:
        return int(round(self.sequence_seconds * SAMPLE_RATE))

    def subject_ids(self) -> list[str]:
        healthy = [f"H{i:02d}" for i in range(1, self.healthy_subjects + 1)]
        patients = [f"C{i:02d}" for i in range(1, self.subjects - self.healthy_subjects + 1)]
        return healthy + patients


def _check_feasible(config: SynthConfig) -> None:
    if config.healthy_subjects > config.subjects:
        raise ConfigurationError(
            f"{config.healthy_subjects} healthy subjects exceed {config.subjects} subjects"
        )
    if not 0 < config.aoi_fraction < 1:
        raise ConfigurationError(f"AoI fraction must lie in (0, 1), got {config.aoi_fraction}")
    if not 0 <= config.protective_prevalence <= config.aoi_fraction:
        raise ConfigurationError(
            f"protective prevalence {config.protective_prevalence} must lie in "
            f"[0, AoI fraction {config.aoi_fraction}]"
        )
    if round(config.aoi_fraction * config.sequence_length) < 1:
        raise ConfigurationError("sequence too short to hold any activity of interest")


def _largest_remainder(total: int, weights: np.ndarray) -> np.ndarray:
    raw = weights / weights.sum() * total
    counts = np.floor(raw).astype(np.int64)
    short = total - int(counts.sum())
    if short:
        order = np.argsort(-(raw - counts), kind="stable")
        counts[order[:short]] += 1
    return counts


def _group_weights() -> dict[str, np.ndarray]:
    return {
        name: np.arange(1, len(joints) + 1) / len(joints) for name, joints in JOINT_GROUPS.items()
    }


_WEIGHTS = _group_weights()


def _drive(
    frames: np.ndarray,
    start: int,
    stop: int,
    activity: int,
    gain: float,
    rng: np.random.Generator,
    guard: np.ndarray,
    compression: float,
    lag: float,
) -> None:
    tau = np.arange(stop - start) / SAMPLE_RATE
    for group, joints in JOINT_GROUPS.items():
        amplitude, frequency, axis = TEMPLATES[activity][group]
        phase = rng.uniform(0.0, 2.0 * math.pi)
        shift = 0.0
        scale: np.ndarray | float = 1.0
        if group in GUARDED_GROUPS:
            scale = np.where(guard, compression, 1.0)
            shift = np.where(guard, lag, 0.0)
        signal = scale * np.sin(2.0 * math.pi * frequency * tau + phase + shift)
        idx = [j - 1 for j in joints]
        direction = np.asarray(_AXES[axis])
        frames[start:stop, idx, :] += (
            gain * amplitude * signal[:, None, None] * _WEIGHTS[group][None, :, None] * direction
        )


def _generate_trial(
    config: SynthConfig, subject_id: str, kind: str, patient: bool, seed: int
) -> Trial:
    rng = derive_rng(seed, "synth", subject_id, kind)
    length = config.sequence_length

    aoi_total = int(round(config.aoi_fraction * length))
    prot_total = int(round(config.protective_prevalence * length)) if patient else 0
    n_bouts = max(1, min(aoi_total, int(round(aoi_total / (config.bout_seconds * SAMPLE_RATE)))))

    bouts = 1 + _largest_remainder(aoi_total - n_bouts, rng.dirichlet(np.full(n_bouts, 8.0)))
    gaps = _largest_remainder(length - aoi_total, rng.dirichlet(np.full(n_bouts + 1, 8.0)))
    guarded = _largest_remainder(prot_total, bouts.astype(float)) if prot_total else np.zeros_like(bouts)

    cycles = math.ceil(n_bouts / len(AOI_CLASSES))
    classes = np.concatenate([rng.permutation(AOI_CLASSES) for _ in range(cycles)])[:n_bouts]

    scale = rng.uniform(0.9, 1.1)
    gain = rng.uniform(0.85, 1.15)
    offset = np.array([rng.normal(0.0, 0.2), 0.0, rng.normal(0.0, 0.2)])
    frames = np.broadcast_to(REST_POSE * scale + offset, (length, N_JOINTS, 3)).copy()
    activity = np.zeros(length, dtype=np.int64)
    protective = np.zeros(length, dtype=bool)
    compression = config.difficult_compression if kind == "difficult" else config.protective_compression

    cursor = 0
    for b in range(n_bouts + 1):
        gap_stop = cursor + int(gaps[b])
        if gap_stop > cursor:
            _drive(frames, cursor, gap_stop, 0, gain, rng, np.zeros(gap_stop - cursor, bool), 1.0, 0.0)
        cursor = gap_stop
        if b == n_bouts:
            break

        stop = cursor + int(bouts[b])
        guard = np.zeros(stop - cursor, dtype=bool)
        span = int(guarded[b])
        if span:
            first = int(rng.integers(0, stop - cursor - span + 1))
            guard[first : first + span] = True
        activity[cursor:stop] = classes[b]
        protective[cursor:stop] = guard
        _drive(frames, cursor, stop, int(classes[b]), gain, rng, guard, compression, config.protective_lag)
        cursor = stop

    if config.sensor_noise:
        frames += rng.normal(0.0, config.sensor_noise, size=frames.shape)
    flips = rng.random((length, N_RATERS)) < config.rater_noise
    rater_flags = protective[:, None] ^ flips

    return Trial(
        subject_id=subject_id,
        trial_kind=kind,  # type: ignore[arg-type]
        frames=frames,
        activity=activity,
        rater_flags=rater_flags,
    )


def synth_generate(config: SynthConfig, seed: int) -> list[Trial]:
    _check_feasible(config)
    trials = []
    for subject_id in config.subject_ids():
        patient = not subject_id.startswith("H")
        for kind in TRIAL_KINDS[: config.trials_per_subject]:
            trials.append(_generate_trial(config, subject_id, kind, patient, seed))
    logger.info(
        "Generated synthetic corpus",
        subjects=config.subjects,
        trials=len(trials),
        frames_per_trial=config.sequence_length,
        seed=seed,
    )
    return trials


def corpus_statistics(trials: Sequence[Trial]) -> list[dict[str, object]]:
    """Realized AoI share and protective share (flagged by at least 2 raters) per trial."""
    rows = []
    for trial in trials:
        length = max(trial.length, 1)
        rows.append(
            {
                "trial": trial.trial_id,
                "frames": trial.length,
                "aoi_fraction": float(np.count_nonzero(trial.activity) / length),
                "protective_fraction": float(
                    np.count_nonzero(trial.rater_flags.sum(axis=1) >= 2) / length
                ),
            }
        )
    return rows
