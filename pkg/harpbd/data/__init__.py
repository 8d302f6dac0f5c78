from harpbd.data.augment import AugmentConfig, augment
from harpbd.data.loso import (
    LosoFold,
    fold_for,
    holdout_split,
    holdout_subjects,
    loso_splits,
    subject_ids,
)
from harpbd.data.synth import SynthConfig, corpus_statistics, synth_generate
from harpbd.data.trials import (
    ACTIVITY_NAMES,
    Trial,
    load_corpus,
    load_trial,
    save_corpus,
    save_trial,
)
from harpbd.data.windows import (
    WindowConfig,
    WindowSample,
    majority_activity_label,
    protective_label,
    segment,
    segment_with,
    window_count,
)

__all__ = [
    "ACTIVITY_NAMES",
    "AugmentConfig",
    "LosoFold",
    "SynthConfig",
    "Trial",
    "WindowConfig",
    "WindowSample",
    "augment",
    "corpus_statistics",
    "fold_for",
    "holdout_split",
    "holdout_subjects",
    "load_corpus",
    "load_trial",
    "loso_splits",
    "majority_activity_label",
    "protective_label",
    "save_corpus",
    "save_trial",
    "segment",
    "segment_with",
    "subject_ids",
    "synth_generate",
    "window_count",
]
