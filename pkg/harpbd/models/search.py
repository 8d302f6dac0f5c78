"""Exhaustive loss / learning-rate grid over a subject hold-out, one module at a time."""

from __future__ import annotations

import itertools
from collections.abc import Sequence
from typing import Literal

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict, Field, field_validator

from harpbd.data import AugmentConfig, LosoFold, Trial, WindowConfig, holdout_split, holdout_subjects, subject_ids
from harpbd.errors import ConfigurationError
from harpbd.evaluation.metrics import average_precision, confusion_matrix, macro_f1
from harpbd.graph import BodyGraph
from harpbd.models.base import TrainConfig
from harpbd.models.trainer import predict_probs, train_module
from harpbd.nn import LossConfig, ModelParams, ModelSpec
from harpbd.nn.network import RAW_CHANNELS
from harpbd.numerics import derive_rng
from harpbd.services.metrics import grid_evaluations

logger = structlog.get_logger()

Module = Literal["HAR", "PBD"]


class SearchConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    holdout_subjects: int = Field(default=3, ge=1)
    gammas: list[float] = [0.0, 0.5, 1.0, 1.5, 2.0, 2.5]
    betas: list[float] = [0.9991, 0.9995, 0.9999]
    lrs: list[float] = [1e-5, 5e-5, 1e-4, 5e-4, 1e-3, 5e-3]
    epochs: int | None = Field(default=None, ge=0)
    modules: list[Module] = ["HAR", "PBD"]

    @field_validator("gammas")
    @classmethod
    def non_negative_gammas(cls, v: list[float]) -> list[float]:
        if any(g < 0 for g in v):
            raise ValueError(f"gamma must be >= 0, got {v}")
        return v

    @field_validator("betas")
    @classmethod
    def betas_in_range(cls, v: list[float]) -> list[float]:
        if any(not 0 <= b < 1 for b in v):
            raise ValueError(f"beta must lie in [0, 1), got {v}")
        return v

    @field_validator("lrs")
    @classmethod
    def positive_lrs(cls, v: list[float]) -> list[float]:
        if any(lr <= 0 for lr in v):
            raise ValueError(f"learning rates must be > 0, got {v}")
        return v

    def grid(self) -> list[tuple[float, float, float]]:
        points = list(itertools.product(self.gammas, self.betas, self.lrs))
        if not points:
            raise ConfigurationError("search grid is empty")
        return points


class GridPoint(BaseModel):
    gamma: float
    beta: float
    lr: float
    score: float


class ModuleSearch(BaseModel):
    module: Module
    metric: str
    best: GridPoint
    evaluated: list[GridPoint]


class SearchResult(BaseModel):
    seed: int
    holdout_subjects: list[str]
    modules: dict[str, ModuleSearch]

    def apply(self, config: TrainConfig) -> TrainConfig:
        """Copy the selected loss and learning-rate settings into a training config."""
        update: dict[str, object] = {}
        if "HAR" in self.modules:
            best = self.modules["HAR"].best
            update["lr_har"] = best.lr
            update["har_loss"] = config.har_loss.model_copy(update={"gamma": best.gamma, "beta": best.beta})
        if "PBD" in self.modules:
            best = self.modules["PBD"].best
            update["lr_pbd"] = best.lr
            update["pbd_loss"] = config.pbd_loss.model_copy(update={"gamma": best.gamma, "beta": best.beta})
        return config.model_copy(update=update)


def _targets(split: LosoFold, module: Module) -> tuple[np.ndarray, np.ndarray]:
    if module == "HAR":
        train = [w.activity_label for w in split.train_windows]
        test = [w.activity_label for w in split.test_windows]
    else:
        train = [int(w.protective_label) for w in split.train_windows]
        test = [int(w.protective_label) for w in split.test_windows]
    return np.array(train, dtype=np.int64), np.array(test, dtype=np.int64)


def evaluate_point(
    split: LosoFold,
    module: Module,
    spec: ModelSpec,
    graph: BodyGraph,
    config: TrainConfig,
    gamma: float,
    beta: float,
    lr: float,
) -> float:
    """Train one module from a fixed initialization and score it on the hold-out."""
    train_targets, test_targets = _targets(split, module)
    params = ModelParams.init(
        spec, graph.node_count, derive_rng(config.seed, "init", "search", module), module.lower()
    )
    loss_config = LossConfig(gamma=gamma, beta=beta)
    train_module(
        split.train_windows,
        train_targets,
        graph,
        params,
        loss_config,
        lr,
        config.epochs,
        config,
        stream=f"search/{module}",
    )
    probs = predict_probs(split.test_windows, graph, params, config.batch_size)
    grid_evaluations.labels(module=module).inc()
    if module == "HAR":
        return macro_f1(confusion_matrix(test_targets, np.argmax(probs, axis=-1), spec.n_classes))
    return average_precision(probs[:, 1], test_targets)


def search_module(
    split: LosoFold,
    module: Module,
    spec: ModelSpec,
    graph: BodyGraph,
    config: TrainConfig,
    search: SearchConfig,
) -> ModuleSearch:
    points = search.grid()
    if module == "PBD" and not any(w.protective_label for w in split.test_windows):
        raise ConfigurationError(f"hold-out {split.test_subject} has no protective windows to rank")

    evaluated = []
    for index, (gamma, beta, lr) in enumerate(points, start=1):
        score = evaluate_point(split, module, spec, graph, config, gamma, beta, lr)
        evaluated.append(GridPoint(gamma=gamma, beta=beta, lr=lr, score=score))
        logger.info(
            "Grid point evaluated",
            module=module,
            point=f"{index}/{len(points)}",
            gamma=gamma,
            beta=beta,
            lr=lr,
            score=score,
        )
    # first maximum in grid order
    best = max(evaluated, key=lambda p: p.score)
    metric = "macro_f1" if module == "HAR" else "pr_auc"
    logger.info("Module search complete", module=module, metric=metric, best=best.model_dump())
    return ModuleSearch(module=module, metric=metric, best=best, evaluated=evaluated)


def grid_search(
    trials: Sequence[Trial],
    search: SearchConfig,
    config: TrainConfig,
    graph: BodyGraph,
    har_spec: ModelSpec | None = None,
    pbd_spec: ModelSpec | None = None,
    window_config: WindowConfig | None = None,
    augment_config: AugmentConfig | None = None,
) -> SearchResult:
    """Select γ, β and learning rate per module on a stratified subject hold-out.

    The PBD module is searched without the hierarchical connection so the two
    searches stay independent.
    """
    search.grid()
    held = holdout_subjects(subject_ids(trials), search.holdout_subjects, config.seed)
    split = holdout_split(trials, held, window_config, augment_config, config.seed)
    if search.epochs is not None:
        config = config.model_copy(update={"epochs": search.epochs})
    specs = {
        "HAR": har_spec or ModelSpec.har(),
        "PBD": (pbd_spec or ModelSpec.pbd()).model_copy(update={"in_channels": RAW_CHANNELS}),
    }
    logger.info(
        "Starting grid search",
        holdout=held,
        train_windows=len(split.train_windows),
        holdout_windows=len(split.test_windows),
        points=len(search.grid()),
        modules=search.modules,
    )
    modules = {
        module: search_module(split, module, specs[module], graph, config, search)
        for module in search.modules
    }
    return SearchResult(seed=config.seed, holdout_subjects=held, modules=modules)
