import numpy as np
import structlog

from harpbd.data import LosoFold
from harpbd.models.base import BaseStrategy, TrainedFold
from harpbd.models.registry import training_strategy
from harpbd.models.trainer import predict_probs, pretrain_har, train_module
from harpbd.nn import ModelParams, hard_labels
from harpbd.utils.timing import Timer

logger = structlog.get_logger()


@training_strategy("PretrainedFrozen")
class PretrainedFrozen(BaseStrategy):
    """HAR pre-trained and frozen; PBD trained on its one-hot activity output."""

    pretrain = True
    joint = False

    def fit(self, fold: LosoFold, har: ModelParams, pbd: ModelParams, timer: Timer) -> TrainedFold:
        timer.start("pretrain")
        snapshot = pretrain_har(fold, self.graph, har, self.config, self.har_loss())
        timer.stop("pretrain")
        har.load_arrays(snapshot.params)

        timer.start("pbd")
        windows = fold.train_windows
        labels = None
        if self.config.hierarchical:
            labels = hard_labels(predict_probs(windows, self.graph, har, self.config.batch_size))
        targets = np.array([int(w.protective_label) for w in windows], dtype=np.int64)
        pbd_log = train_module(
            windows,
            targets,
            self.graph,
            pbd,
            self.pbd_loss(),
            self.config.lr_pbd,
            self.config.effective_pbd_epochs,
            self.config,
            stream=f"{fold.test_subject}/pbd",
            label_vectors=labels,
        )
        timer.stop("pbd")

        return TrainedFold(
            fold=fold.test_subject,
            strategy=self.name,
            har_params=har.arrays(),
            pbd_params=pbd.arrays(),
            har_log=snapshot.log,
            pbd_log=pbd_log,
            selected_har_epoch=snapshot.epoch,
            har_snapshot=snapshot.params,
        )
