"""Mini-batch training loops shared by the strategies, HAR pre-training and fold entry point."""

from __future__ import annotations

import time
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
import structlog

from harpbd.data import LosoFold, WindowSample
from harpbd.errors import ConfigurationError
from harpbd.evaluation.metrics import accuracy, confusion_matrix, macro_f1
from harpbd.graph import BodyGraph
from harpbd.models.base import EpochLog, TrainConfig, TrainedFold, stack_windows, with_label_vectors
from harpbd.models.registry import StrategyRegistry
from harpbd.nn import ClassCounts, LossConfig, ModelParams, ModelSpec, cfcc, module_forward, one_hot
from harpbd.numerics import Adam, ComputationRecord, backward, derive_rng
from harpbd.services.metrics import epoch_duration, epochs_completed, last_epoch_loss

logger = structlog.get_logger()


@dataclass(eq=False)
class HarSnapshot:
    params: dict[str, np.ndarray]
    epoch: int
    log: list[EpochLog]


def minibatches(n: int, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    order = rng.permutation(n)
    return [order[i : i + batch_size] for i in range(0, n, batch_size)]


def epoch_metrics(epoch: int, loss: float, truth: np.ndarray, predicted: np.ndarray, n_classes: int) -> EpochLog:
    cm = confusion_matrix(truth, predicted, n_classes)
    if cm.sum() == 0:
        return EpochLog(epoch, loss, 0.0, 0.0)
    return EpochLog(epoch, loss, accuracy(cm), macro_f1(cm))


def record_epoch(module: str, log: EpochLog, seconds: float, **context) -> None:
    epochs_completed.labels(module=module).inc()
    epoch_duration.labels(module=module).observe(seconds)
    last_epoch_loss.labels(module=module).set(log.loss)
    logger.debug(
        "Epoch complete",
        module=module,
        epoch=log.epoch,
        loss=log.loss,
        acc=log.acc,
        macro_f1=log.macro_f1,
        **context,
    )


def predict_probs(
    windows: Sequence[WindowSample],
    graph: BodyGraph,
    params: ModelParams,
    batch_size: int,
    label_vectors: np.ndarray | None = None,
) -> np.ndarray:
    chunks = []
    for start in range(0, len(windows), batch_size):
        x = stack_windows(windows[start : start + batch_size], graph)
        if label_vectors is not None:
            x = with_label_vectors(x, label_vectors[start : start + batch_size])
        chunks.append(module_forward(x, graph, params).value)
    if not chunks:
        return np.zeros((0, params.spec.n_classes))
    return np.concatenate(chunks)


def run_epoch(
    windows: Sequence[WindowSample],
    targets: np.ndarray,
    graph: BodyGraph,
    params: ModelParams,
    optimizer: Adam,
    loss_config: LossConfig,
    counts: ClassCounts,
    batch_size: int,
    shuffle_rng: np.random.Generator,
    dropout_rng: np.random.Generator,
    label_vectors: np.ndarray | None = None,
) -> tuple[float, np.ndarray]:
    """One pass over ``windows``; returns the summed loss and per-window training predictions."""
    n_classes = params.spec.n_classes
    predicted = np.zeros(len(windows), dtype=np.int64)
    total = 0.0
    for idx in minibatches(len(windows), batch_size, shuffle_rng):
        x = stack_windows([windows[i] for i in idx], graph)
        if label_vectors is not None:
            x = with_label_vectors(x, label_vectors[idx])
        with ComputationRecord() as record:
            probs = module_forward(x, graph, params, training=True, rng=dropout_rng)
            loss = cfcc(probs, one_hot(targets[idx], n_classes), counts, loss_config)
        optimizer.step(backward(record, loss))
        total += loss.item()
        predicted[idx] = np.argmax(probs.value, axis=-1)
    return total, predicted


def train_module(
    windows: Sequence[WindowSample],
    targets: np.ndarray,
    graph: BodyGraph,
    params: ModelParams,
    loss_config: LossConfig,
    lr: float,
    epochs: int,
    config: TrainConfig,
    stream: str,
    label_vectors: np.ndarray | None = None,
) -> list[EpochLog]:
    module = params.spec.role
    counts = ClassCounts.from_labels(targets, params.spec.n_classes)
    optimizer = Adam(params.named(), lr=lr)
    shuffle_rng = derive_rng(config.seed, "shuffle", stream)
    dropout_rng = derive_rng(config.seed, "dropout", stream)

    logs = []
    for epoch in range(1, epochs + 1):
        started = time.perf_counter()
        loss, predicted = run_epoch(
            windows, targets, graph, params, optimizer, loss_config, counts,
            config.batch_size, shuffle_rng, dropout_rng, label_vectors,
        )
        log = epoch_metrics(epoch, loss, targets, predicted, params.spec.n_classes)
        record_epoch(module, log, time.perf_counter() - started, stream=stream)
        logs.append(log)
    return logs


def validation_subject(fold: LosoFold, seed: int) -> str:
    subjects = fold.train_subjects
    if len(subjects) < 2:
        raise ConfigurationError(
            f"fold {fold.test_subject} has {len(subjects)} training subject(s); "
            "HAR pre-training holds one out for snapshot selection"
        )
    rng = derive_rng(seed, "validation", fold.test_subject)
    return subjects[int(rng.integers(len(subjects)))]


def pretrain_har(
    fold: LosoFold,
    graph: BodyGraph,
    params: ModelParams,
    config: TrainConfig,
    loss_config: LossConfig | None = None,
) -> HarSnapshot:
    """Train HAR alone and keep the epoch with the best held-out activity accuracy."""
    held_out = validation_subject(fold, config.seed)
    train = [w for w in fold.train_windows if w.subject_id != held_out]
    validation = [w for w in fold.train_windows if w.subject_id == held_out and not w.is_augmented]
    targets = np.array([w.activity_label for w in train], dtype=np.int64)
    val_truth = np.array([w.activity_label for w in validation], dtype=np.int64)
    n_classes = params.spec.n_classes
    loss_config = loss_config or config.har_loss
    log = logger.bind(fold=fold.test_subject, module="HAR", validation_subject=held_out)
    if not validation:
        log.warning("Validation subject has no windows, selecting by training accuracy")

    counts = ClassCounts.from_labels(targets, n_classes)
    optimizer = Adam(params.named(), lr=config.lr_har)
    stream = f"{fold.test_subject}/pretrain"
    shuffle_rng = derive_rng(config.seed, "shuffle", stream)
    dropout_rng = derive_rng(config.seed, "dropout", stream)

    best = params.arrays()
    best_epoch = 0
    best_acc = -1.0
    logs: list[EpochLog] = []
    for epoch in range(1, config.epochs + 1):
        started = time.perf_counter()
        loss, predicted = run_epoch(
            train, targets, graph, params, optimizer, loss_config, counts,
            config.batch_size, shuffle_rng, dropout_rng,
        )
        if validation:
            val_pred = np.argmax(predict_probs(validation, graph, params, config.batch_size), axis=-1)
            epoch_log = epoch_metrics(epoch, loss, val_truth, val_pred, n_classes)
        else:
            epoch_log = epoch_metrics(epoch, loss, targets, predicted, n_classes)
        record_epoch("HAR", epoch_log, time.perf_counter() - started, stream=stream)
        logs.append(epoch_log)
        if epoch_log.acc > best_acc:
            best_acc = epoch_log.acc
            best_epoch = epoch
            best = params.arrays()

    log.info("HAR pre-training complete", epochs=config.epochs, selected_epoch=best_epoch, validation_acc=best_acc)
    return HarSnapshot(params=best, epoch=best_epoch, log=logs)


def train_strategy(
    fold: LosoFold,
    har_spec: ModelSpec,
    pbd_spec: ModelSpec,
    config: TrainConfig,
    graph: BodyGraph,
) -> TrainedFold:
    strategy = StrategyRegistry.create(config, har_spec, pbd_spec, graph)
    return strategy.run(fold)
