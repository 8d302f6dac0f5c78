from __future__ import annotations

from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import structlog

from harpbd.data.augment import AugmentConfig, augment
from harpbd.data.trials import Trial
from harpbd.data.windows import WindowConfig, WindowSample, segment_with
from harpbd.errors import ConfigurationError, ContractViolation
from harpbd.numerics import derive_rng

logger = structlog.get_logger()

HEALTHY_PREFIX = "H"


@dataclass(frozen=True, eq=False)
class LosoFold:
    test_subject: str
    train_windows: list[WindowSample]
    test_windows: list[WindowSample]

    @property
    def train_subjects(self) -> list[str]:
        return sorted({w.subject_id for w in self.train_windows})


def subject_ids(trials: Iterable[Trial]) -> list[str]:
    return sorted({trial.subject_id for trial in trials})


def _windows_by_subject(
    trials: Sequence[Trial], window_config: WindowConfig
) -> dict[str, list[WindowSample]]:
    grouped: dict[str, list[WindowSample]] = {}
    for trial in sorted(trials, key=lambda t: t.trial_id):
        grouped.setdefault(trial.subject_id, []).extend(segment_with(trial, window_config))
    return grouped


def _augmented(
    subject: str, windows: list[WindowSample], config: AugmentConfig, seed: int
) -> list[WindowSample]:
    if not config.enabled:
        return list(windows)
    return augment(
        windows, config.jitter_sigmas, config.crop_probs, derive_rng(seed, "augment", subject)
    )


def _build_fold(
    test_subject: str,
    grouped: dict[str, list[WindowSample]],
    augment_config: AugmentConfig,
    seed: int,
) -> LosoFold:
    train: list[WindowSample] = []
    for subject in sorted(grouped):
        if subject != test_subject:
            train.extend(_augmented(subject, grouped[subject], augment_config, seed))
    return LosoFold(test_subject=test_subject, train_windows=train, test_windows=list(grouped[test_subject]))


def _prepare(
    trials: Sequence[Trial], exclude_subjects: Iterable[str]
) -> list[Trial]:
    excluded = set(exclude_subjects)
    kept = [trial for trial in trials if trial.subject_id not in excluded]
    if len(subject_ids(kept)) < 2:
        raise ContractViolation(
            f"leave-one-subject-out needs at least 2 subjects, got {subject_ids(kept)}"
        )
    return kept


def loso_splits(
    trials: Sequence[Trial],
    window_config: WindowConfig | None = None,
    augment_config: AugmentConfig | None = None,
    seed: int = 0,
    exclude_subjects: Iterable[str] = (),
) -> list[LosoFold]:
    """One fold per subject; every trial of the test subject stays out of training."""
    kept = _prepare(trials, exclude_subjects)
    grouped = _windows_by_subject(kept, window_config or WindowConfig())
    augment_config = augment_config or AugmentConfig()
    folds = [_build_fold(subject, grouped, augment_config, seed) for subject in sorted(grouped)]
    logger.info("Built LOSO folds", folds=len(folds), subjects=sorted(grouped))
    return folds


def fold_for(
    trials: Sequence[Trial],
    test_subject: str,
    window_config: WindowConfig | None = None,
    augment_config: AugmentConfig | None = None,
    seed: int = 0,
    exclude_subjects: Iterable[str] = (),
) -> LosoFold:
    kept = _prepare(trials, exclude_subjects)
    grouped = _windows_by_subject(kept, window_config or WindowConfig())
    if test_subject not in grouped:
        raise ContractViolation(f"subject {test_subject} is not in the corpus")
    return _build_fold(test_subject, grouped, augment_config or AugmentConfig(), seed)


def holdout_subjects(subjects: Sequence[str], count: int, seed: int) -> list[str]:
    """Pick ``count`` subjects stratified by healthy / patient group."""
    if not 0 < count < len(subjects):
        raise ConfigurationError(
            f"hold-out of {count} subjects needs between 1 and {len(subjects) - 1}"
        )
    rng = derive_rng(seed, "holdout")
    healthy = sorted(s for s in subjects if s.startswith(HEALTHY_PREFIX))
    patients = sorted(s for s in subjects if not s.startswith(HEALTHY_PREFIX))
    n_healthy = round(count * len(healthy) / len(subjects))
    n_healthy = min(max(n_healthy, count - len(patients)), len(healthy))
    n_patients = count - n_healthy

    picked: list[str] = []
    if n_healthy:
        picked.extend(rng.choice(healthy, size=n_healthy, replace=False).tolist())
    if n_patients:
        picked.extend(rng.choice(patients, size=n_patients, replace=False).tolist())
    return sorted(picked)


def holdout_split(
    trials: Sequence[Trial],
    holdout: Sequence[str],
    window_config: WindowConfig | None = None,
    augment_config: AugmentConfig | None = None,
    seed: int = 0,
) -> LosoFold:
    """Train on every subject outside ``holdout`` and test on the hold-out group."""
    held = sorted(holdout)
    grouped = _windows_by_subject(trials, window_config or WindowConfig())
    unknown = [s for s in held if s not in grouped]
    if unknown:
        raise ContractViolation(f"hold-out subjects {unknown} are not in the corpus")
    augment_config = augment_config or AugmentConfig()
    train: list[WindowSample] = []
    test: list[WindowSample] = []
    for subject in sorted(grouped):
        if subject in held:
            test.extend(grouped[subject])
        else:
            train.extend(_augmented(subject, grouped[subject], augment_config, seed))
    return LosoFold(test_subject="+".join(held), train_windows=train, test_windows=test)
