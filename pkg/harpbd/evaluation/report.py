from __future__ import annotations

from collections.abc import Mapping, Sequence

import numpy as np
import pandas as pd
import structlog
from pydantic import BaseModel, Field

from harpbd.data import ACTIVITY_NAMES
from harpbd.evaluation.metrics import PRCurve, accuracy, confusion_matrix, macro_f1, pr_auc
from harpbd.models.base import FoldPredictions

logger = structlog.get_logger()

HAR_CLASSES = len(ACTIVITY_NAMES)
PBD_CLASSES = 2
TABLE_COLUMNS = [
    "run",
    "strategy",
    "sensor_set",
    "har_acc",
    "har_macro_f1",
    "pbd_acc",
    "pbd_macro_f1",
    "pr_auc",
]


class ModuleMetrics(BaseModel):
    acc: float
    macro_f1: float
    confusion_matrix: list[list[int]]


class FoldMetrics(BaseModel):
    fold: str
    windows: int
    har: ModuleMetrics | None = None
    pbd: ModuleMetrics | None = None
    pr_auc: float | None = None
    selected_har_epoch: int | None = None


class FoldAverage(BaseModel):
    har_acc: float
    har_macro_f1: float
    pbd_acc: float
    pbd_macro_f1: float


class MetricsReport(BaseModel):
    run_name: str
    strategy: str
    sensor_set: str
    node_count: int | None = None
    windows: int
    har: ModuleMetrics = Field(description="window-weighted over all folds")
    pbd: ModuleMetrics = Field(description="window-weighted over all folds")
    pr_auc: float = Field(description="average precision of the pooled protective scores")
    fold_average: FoldAverage
    folds: list[FoldMetrics]

    def to_text(self) -> str:
        lines = [
            f"run: {self.run_name}",
            f"strategy: {self.strategy}",
            f"sensor set: {self.sensor_set}" + (f" ({self.node_count} nodes)" if self.node_count else ""),
            f"windows: {self.windows}",
            "",
            "pooled (window-weighted)",
            f"  HAR acc {self.har.acc:.4f}  macro F1 {self.har.macro_f1:.4f}",
            f"  PBD acc {self.pbd.acc:.4f}  macro F1 {self.pbd.macro_f1:.4f}  PR-AUC {self.pr_auc:.4f}",
            "fold-averaged",
            f"  HAR acc {self.fold_average.har_acc:.4f}  macro F1 {self.fold_average.har_macro_f1:.4f}",
            f"  PBD acc {self.fold_average.pbd_acc:.4f}  macro F1 {self.fold_average.pbd_macro_f1:.4f}",
            "",
            "HAR confusion matrix (rows truth, columns prediction)",
            _matrix_text(self.har.confusion_matrix, ACTIVITY_NAMES),
            "PBD confusion matrix (rows truth, columns prediction)",
            _matrix_text(self.pbd.confusion_matrix, ("normal", "protective")),
            "",
            "per fold",
            _fold_table(self.folds),
        ]
        return "\n".join(lines) + "\n"

    def table_row(self) -> dict[str, object]:
        return {
            "run": self.run_name,
            "strategy": self.strategy,
            "sensor_set": self.sensor_set,
            "har_acc": self.har.acc,
            "har_macro_f1": self.har.macro_f1,
            "pbd_acc": self.pbd.acc,
            "pbd_macro_f1": self.pbd.macro_f1,
            "pr_auc": self.pr_auc,
        }


def _matrix_text(cm: list[list[int]], names: Sequence[str]) -> str:
    frame = pd.DataFrame(cm, index=list(names), columns=list(names))
    return frame.to_string()


def _fold_table(folds: Sequence[FoldMetrics]) -> str:
    rows = []
    for fold in folds:
        rows.append(
            {
                "fold": fold.fold,
                "windows": fold.windows,
                "har_acc": fold.har.acc if fold.har else np.nan,
                "har_macro_f1": fold.har.macro_f1 if fold.har else np.nan,
                "pbd_acc": fold.pbd.acc if fold.pbd else np.nan,
                "pbd_macro_f1": fold.pbd.macro_f1 if fold.pbd else np.nan,
                "pr_auc": np.nan if fold.pr_auc is None else fold.pr_auc,
                "har_epoch": fold.selected_har_epoch,
            }
        )
    return pd.DataFrame(rows).to_string(index=False, float_format=lambda v: f"{v:.4f}", na_rep="-")


def module_metrics(truth: np.ndarray, predicted: np.ndarray, n_classes: int) -> ModuleMetrics:
    cm = confusion_matrix(truth, predicted, n_classes)
    return ModuleMetrics(acc=accuracy(cm), macro_f1=macro_f1(cm), confusion_matrix=cm.tolist())


def fold_metrics(fold: str, predictions: FoldPredictions, selected_har_epoch: int | None = None) -> FoldMetrics:
    metrics = FoldMetrics(fold=fold, windows=len(predictions), selected_har_epoch=selected_har_epoch)
    if len(predictions) == 0:
        logger.warning("Fold has no test windows", fold=fold)
        return metrics
    metrics.har = module_metrics(predictions.true_act, predictions.pred_act, HAR_CLASSES)
    metrics.pbd = module_metrics(predictions.true_prot, predictions.pred_prot, PBD_CLASSES)
    if predictions.true_prot.sum() == 0:
        logger.warning("Fold has no protective windows, per-fold PR-AUC undefined", fold=fold)
    else:
        metrics.pr_auc = pr_auc(predictions.prot_score, predictions.true_prot).auc
    return metrics


def pooled(predictions: Mapping[str, FoldPredictions]) -> FoldPredictions:
    """Concatenate fold predictions in fold-id order."""
    parts = [predictions[fold].to_frame() for fold in sorted(predictions)]
    return FoldPredictions.from_frame(pd.concat(parts, ignore_index=True))


def build_report(
    run_name: str,
    strategy: str,
    sensor_set: str,
    predictions: Mapping[str, FoldPredictions],
    selected_epochs: Mapping[str, int | None] | None = None,
    node_count: int | None = None,
) -> tuple[MetricsReport, PRCurve]:
    selected_epochs = selected_epochs or {}
    folds = [fold_metrics(fold, predictions[fold], selected_epochs.get(fold)) for fold in sorted(predictions)]
    everything = pooled(predictions)
    curve = pr_auc(everything.prot_score, everything.true_prot)

    scored = [f for f in folds if f.har is not None and f.pbd is not None]
    average = FoldAverage(
        har_acc=float(np.mean([f.har.acc for f in scored])),
        har_macro_f1=float(np.mean([f.har.macro_f1 for f in scored])),
        pbd_acc=float(np.mean([f.pbd.acc for f in scored])),
        pbd_macro_f1=float(np.mean([f.pbd.macro_f1 for f in scored])),
    )
    report = MetricsReport(
        run_name=run_name,
        strategy=strategy,
        sensor_set=sensor_set,
        node_count=node_count,
        windows=len(everything),
        har=module_metrics(everything.true_act, everything.pred_act, HAR_CLASSES),
        pbd=module_metrics(everything.true_prot, everything.pred_prot, PBD_CLASSES),
        pr_auc=curve.auc,
        fold_average=average,
        folds=folds,
    )
    logger.info(
        "Built metrics report",
        run=run_name,
        strategy=strategy,
        sensor_set=sensor_set,
        har_macro_f1=report.har.macro_f1,
        pbd_macro_f1=report.pbd.macro_f1,
        pr_auc=report.pr_auc,
    )
    return report, curve


def comparison_table(reports: Sequence[MetricsReport]) -> pd.DataFrame:
    return pd.DataFrame([report.table_row() for report in reports], columns=TABLE_COLUMNS)


def format_table(table: pd.DataFrame) -> str:
    return table.to_string(index=False, float_format=lambda v: f"{v:.4f}") + "\n"
