from __future__ import annotations

from dataclasses import asdict
from typing import Any

import pandas as pd
import structlog

from harpbd.config import RunConfig, settings
from harpbd.data import fold_for, load_corpus
from harpbd.errors import ConfigurationError
from harpbd.models.base import EpochLog, TrainedFold
from harpbd.models.trainer import train_strategy
from harpbd.services.metrics import write_metrics
from harpbd.services.storage import RunStore, fold_key
from harpbd.utils.timing import Timer

logger = structlog.get_logger()

LOG_COLUMNS = ["epoch", "loss", "acc", "macro_f1"]


def epoch_frame(log: list[EpochLog]) -> pd.DataFrame:
    return pd.DataFrame([asdict(entry) for entry in log], columns=LOG_COLUMNS)


def write_fold(store: RunStore, trained: TrainedFold) -> None:
    def key(name: str) -> str:
        return fold_key(trained.strategy, trained.fold, name)

    store.write_checkpoint(trained.har_params, key("har.ckpt"))
    store.write_checkpoint(trained.pbd_params, key("pbd.ckpt"))
    store.write_csv(epoch_frame(trained.har_log), key("har_log.csv"))
    store.write_csv(epoch_frame(trained.pbd_log), key("pbd_log.csv"))
    if trained.predictions is not None:
        store.write_csv(trained.predictions.to_frame(), key("predictions.csv"))
    store.write_json(
        {
            "fold": trained.fold,
            "strategy": trained.strategy,
            "selected_har_epoch": trained.selected_har_epoch,
        },
        key("fold.json"),
    )


def train_fold(config_json: str, test_subject: str) -> dict[str, Any]:
    """Rebuild one LOSO fold from the corpus manifest, train it and persist its artifacts."""
    timer = Timer()
    timer.start("total")
    config = RunConfig.model_validate_json(config_json)
    if config.corpus is None:
        raise ConfigurationError("run config has no corpus manifest")
    log = logger.bind(fold=test_subject, strategy=config.train.strategy, run=config.name)

    timer.start("data_loading")
    trials = load_corpus(config.corpus)
    fold = fold_for(
        trials, test_subject, config.window, config.augment, config.seed, config.exclude_subjects
    )
    graph = config.graph()
    timer.stop("data_loading")

    trained = train_strategy(fold, config.har_spec(), config.pbd_spec(), config.train, graph)

    timer.start("storage")
    store = RunStore(config.run_dir)
    write_fold(store, trained)
    if settings.metrics_enabled:
        write_metrics(store.path(fold_key(trained.strategy, trained.fold, "training.prom")))
    timer.stop("storage")

    timer.stop("total")
    timings = {**trained.timings, **timer.get_all_timings()}
    log.info("Fold artifacts written", timing=timings, selected_har_epoch=trained.selected_har_epoch)
    return {
        "fold": trained.fold,
        "selected_har_epoch": trained.selected_har_epoch,
        "windows": len(trained.predictions) if trained.predictions is not None else 0,
        "timing": timings,
    }
