from pathlib import Path

import structlog
from prometheus_client import CollectorRegistry, Counter, Gauge, Histogram, write_to_textfile

logger = structlog.get_logger()

registry = CollectorRegistry()

epochs_completed = Counter(
    "harpbd_epochs_completed_total",
    "Total number of training epochs completed",
    ["module"],
    registry=registry,
)

folds_completed = Counter(
    "harpbd_folds_completed_total",
    "Total number of LOSO folds trained",
    ["strategy"],
    registry=registry,
)

grid_evaluations = Counter(
    "harpbd_grid_evaluations_total",
    "Total number of grid-search points evaluated",
    ["module"],
    registry=registry,
)

epoch_duration = Histogram(
    "harpbd_epoch_duration_seconds",
    "Time spent in one training epoch",
    ["module"],
    buckets=(0.1, 0.5, 1.0, 2.5, 5.0, 10.0, 30.0, 60.0, 300.0),
    registry=registry,
)

fold_duration = Histogram(
    "harpbd_fold_duration_seconds",
    "Time to train and evaluate one fold",
    ["strategy"],
    buckets=(1.0, 10.0, 60.0, 300.0, 900.0, 1800.0, 3600.0, 7200.0),
    registry=registry,
)

last_epoch_loss = Gauge(
    "harpbd_last_epoch_loss", "Summed loss of the most recent epoch", ["module"], registry=registry
)


def write_metrics(path: str | Path) -> None:
    """Dump the registry in textfile-collector format."""
    write_to_textfile(str(path), registry)
    logger.debug("Wrote prometheus metrics", path=str(path))
