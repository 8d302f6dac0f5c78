from __future__ import annotations

from typing import TYPE_CHECKING

import pandas as pd
import structlog

from harpbd.data import Trial, WindowConfig, segment_with
from harpbd.errors import ContractViolation
from harpbd.nn import ModelParams

if TYPE_CHECKING:
    from harpbd.models.base import BaseStrategy

logger = structlog.get_logger()

TRACE_COLUMNS = ["window_start", "true_act", "pred_act", "true_prot", "pred_prot"]


def trace(
    trial: Trial,
    strategy: BaseStrategy,
    har: ModelParams,
    pbd: ModelParams,
    window_config: WindowConfig,
    test_subject: str,
) -> pd.DataFrame:
    """Per-window truth and prediction timeline of one test trial."""
    if trial.subject_id != test_subject:
        raise ContractViolation(
            f"trial {trial.trial_id} belongs to {trial.subject_id}, not to fold {test_subject}"
        )
    windows = segment_with(trial, window_config)
    if not windows:
        logger.debug("Trial shorter than one window", trial=trial.trial_id, frames=trial.length)
        return pd.DataFrame({name: pd.Series(dtype="int64") for name in TRACE_COLUMNS})
    predictions = strategy.predict(windows, har, pbd)
    return predictions.to_frame()[TRACE_COLUMNS].reset_index(drop=True)
