from __future__ import annotations

from abc import ABC, abstractmethod
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import ClassVar, Literal

import numpy as np
import pandas as pd
import structlog
from pydantic import BaseModel, ConfigDict, Field

from harpbd.data import LosoFold, WindowSample
from harpbd.graph import BodyGraph
from harpbd.nn import LossConfig, ModelParams, ModelSpec, module_forward
from harpbd.nn.network import hard_labels
from harpbd.numerics import derive_rng
from harpbd.services.metrics import fold_duration, folds_completed
from harpbd.utils.timing import Timer

logger = structlog.get_logger()

STRATEGY_NAMES = (
    "PretrainedFrozen",
    "JointHarCfcc",
    "JointPbdCfcc",
    "JointBothCfcc",
    "PretrainedJointHarCfcc",
    "PretrainedJointPbdCfcc",
    "PretrainedJointBothCfcc",
)
StrategyName = Literal[
    "PretrainedFrozen",
    "JointHarCfcc",
    "JointPbdCfcc",
    "JointBothCfcc",
    "PretrainedJointHarCfcc",
    "PretrainedJointPbdCfcc",
    "PretrainedJointBothCfcc",
]


class TrainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    strategy: StrategyName = "PretrainedFrozen"
    lr_har: float = Field(default=5e-4, gt=0)
    lr_pbd: float = Field(default=1e-3, gt=0)
    epochs: int = Field(default=100, ge=0)
    pbd_epochs: int | None = Field(default=None, ge=0)
    batch_size: int = Field(default=40, ge=1)
    loss_weights: tuple[float, float] = (1.0, 1.0)
    har_loss: LossConfig = Field(default_factory=lambda: LossConfig(gamma=0.5, beta=0.9999))
    pbd_loss: LossConfig = Field(default_factory=lambda: LossConfig(gamma=2.0, beta=0.9999))
    hierarchical: bool = True
    har_cfcc: bool | None = None
    pbd_cfcc: bool | None = None
    seed: int = 0

    @property
    def effective_pbd_epochs(self) -> int:
        return self.epochs if self.pbd_epochs is None else self.pbd_epochs


@dataclass(frozen=True)
class EpochLog:
    epoch: int
    loss: float
    acc: float
    macro_f1: float


@dataclass(frozen=True, eq=False)
class FoldPredictions:
    subject_id: list[str]
    trial_kind: list[str]
    window_start: np.ndarray
    true_act: np.ndarray
    pred_act: np.ndarray
    true_prot: np.ndarray
    pred_prot: np.ndarray
    prot_score: np.ndarray

    COLUMNS: ClassVar[tuple[str, ...]] = (
        "subject_id",
        "trial_kind",
        "window_start",
        "true_act",
        "pred_act",
        "true_prot",
        "pred_prot",
        "prot_score",
    )

    def __len__(self) -> int:
        return len(self.subject_id)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({name: getattr(self, name) for name in self.COLUMNS}, columns=list(self.COLUMNS))

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> FoldPredictions:
        return cls(
            subject_id=[str(s) for s in frame["subject_id"]],
            trial_kind=[str(k) for k in frame["trial_kind"]],
            window_start=frame["window_start"].to_numpy(dtype=np.int64),
            true_act=frame["true_act"].to_numpy(dtype=np.int64),
            pred_act=frame["pred_act"].to_numpy(dtype=np.int64),
            true_prot=frame["true_prot"].to_numpy(dtype=np.int64),
            pred_prot=frame["pred_prot"].to_numpy(dtype=np.int64),
            prot_score=frame["prot_score"].to_numpy(dtype=np.float64),
        )


@dataclass(eq=False)
class TrainedFold:
    fold: str
    strategy: str
    har_params: dict[str, np.ndarray]
    pbd_params: dict[str, np.ndarray]
    har_log: list[EpochLog] = field(default_factory=list)
    pbd_log: list[EpochLog] = field(default_factory=list)
    selected_har_epoch: int | None = None
    har_snapshot: dict[str, np.ndarray] | None = None
    predictions: FoldPredictions | None = None
    timings: dict[str, float] = field(default_factory=dict)


def stack_windows(windows: Sequence[WindowSample], graph: BodyGraph) -> np.ndarray:
    return np.stack([graph.select(w.features) for w in windows])


class BaseStrategy(ABC):
    name: ClassVar[str] = ""
    pretrain: ClassVar[bool] = True
    joint: ClassVar[bool] = False
    default_har_cfcc: ClassVar[bool] = True
    default_pbd_cfcc: ClassVar[bool] = True

    def __init__(self, config: TrainConfig, har_spec: ModelSpec, pbd_spec: ModelSpec, graph: BodyGraph):
        self.config = config
        self.graph = graph
        self.har_spec = har_spec
        channels = har_spec.n_classes + har_spec.in_channels if config.hierarchical else har_spec.in_channels
        self.pbd_spec = pbd_spec.model_copy(update={"in_channels": channels})

    @property
    def har_cfcc(self) -> bool:
        return self.default_har_cfcc if self.config.har_cfcc is None else self.config.har_cfcc

    @property
    def pbd_cfcc(self) -> bool:
        return self.default_pbd_cfcc if self.config.pbd_cfcc is None else self.config.pbd_cfcc

    def har_loss(self, cfcc: bool | None = None) -> LossConfig:
        use = self.har_cfcc if cfcc is None else cfcc
        return self.config.har_loss if use else self.config.har_loss.plain()

    def pretrain_loss(self) -> LossConfig:
        # pre-training uses CFCC unless explicitly switched off
        return self.har_loss(cfcc=self.config.har_cfcc is not False)

    def pbd_loss(self) -> LossConfig:
        return self.config.pbd_loss if self.pbd_cfcc else self.config.pbd_loss.plain()

    def init_params(self, fold: str) -> tuple[ModelParams, ModelParams]:
        n = self.graph.node_count
        har = ModelParams.init(self.har_spec, n, derive_rng(self.config.seed, "init", fold, "HAR"), "har")
        pbd = ModelParams.init(self.pbd_spec, n, derive_rng(self.config.seed, "init", fold, "PBD"), "pbd")
        return har, pbd

    @abstractmethod
    def fit(self, fold: LosoFold, har: ModelParams, pbd: ModelParams, timer: Timer) -> TrainedFold:
        pass

    def run(self, fold: LosoFold) -> TrainedFold:
        timer = Timer()
        timer.start("fold")
        log = logger.bind(fold=fold.test_subject, strategy=self.name)
        log.info("Training fold", train_windows=len(fold.train_windows), test_windows=len(fold.test_windows))

        har, pbd = self.init_params(fold.test_subject)
        trained = self.fit(fold, har, pbd, timer)

        timer.start("inference")
        trained.predictions = self.predict(fold.test_windows, har, pbd)
        timer.stop("inference")

        elapsed = timer.stop("fold")
        trained.timings = timer.get_all_timings()
        fold_duration.labels(strategy=self.name).observe(elapsed / 1000)
        folds_completed.labels(strategy=self.name).inc()
        log.info("Fold complete", timing=trained.timings, selected_har_epoch=trained.selected_har_epoch)
        return trained

    def har_labels(self, probs: np.ndarray) -> np.ndarray:
        """Label vectors fed to the PBD module at inference."""
        return probs if self.joint else hard_labels(probs)

    def predict(self, windows: Sequence[WindowSample], har: ModelParams, pbd: ModelParams) -> FoldPredictions:
        har_probs = []
        pbd_probs = []
        size = self.config.batch_size
        for start in range(0, len(windows), size):
            x = stack_windows(windows[start : start + size], self.graph)
            p_har = module_forward(x, self.graph, har).value
            label = self.har_labels(p_har) if self.config.hierarchical else None
            x_pbd = x if label is None else with_label_vectors(x, label)
            har_probs.append(p_har)
            pbd_probs.append(module_forward(x_pbd, self.graph, pbd).value)

        p_har = np.concatenate(har_probs) if har_probs else np.zeros((0, self.har_spec.n_classes))
        p_pbd = np.concatenate(pbd_probs) if pbd_probs else np.zeros((0, self.pbd_spec.n_classes))
        return FoldPredictions(
            subject_id=[w.subject_id for w in windows],
            trial_kind=[w.trial_kind for w in windows],
            window_start=np.array([w.window_start for w in windows], dtype=np.int64),
            true_act=np.array([w.activity_label for w in windows], dtype=np.int64),
            pred_act=np.argmax(p_har, axis=-1).astype(np.int64),
            true_prot=np.array([int(w.protective_label) for w in windows], dtype=np.int64),
            pred_prot=np.argmax(p_pbd, axis=-1).astype(np.int64),
            prot_score=p_pbd[:, 1].copy(),
        )

    def restore(self, har_params: dict[str, np.ndarray], pbd_params: dict[str, np.ndarray]) -> tuple[ModelParams, ModelParams]:
        har, pbd = self.init_params("restore")
        har.load_arrays(har_params)
        pbd.load_arrays(pbd_params)
        return har, pbd


def with_label_vectors(x: np.ndarray, labels: np.ndarray) -> np.ndarray:
    batch, steps, nodes, _ = x.shape
    spread = np.broadcast_to(labels[:, None, None, :], (batch, steps, nodes, labels.shape[-1]))
    return np.concatenate([x, spread], axis=-1)
