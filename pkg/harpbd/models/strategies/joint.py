from __future__ import annotations

import time

import numpy as np
import structlog

from harpbd.data import LosoFold
from harpbd.models.base import BaseStrategy, EpochLog, TrainedFold, stack_windows
from harpbd.models.registry import training_strategy
from harpbd.models.trainer import epoch_metrics, minibatches, pretrain_har, record_epoch
from harpbd.nn import ClassCounts, ModelParams, cfcc, hierarchical_input, module_forward, one_hot
from harpbd.numerics import Adam, ComputationRecord, backward, derive_rng
from harpbd.utils.timing import Timer

logger = structlog.get_logger()


class JointStrategy(BaseStrategy):
    """HAR and PBD optimized together on 1.0 * L_HAR + 1.0 * L_PBD.

    The soft HAR probabilities feed the PBD input so the PBD error reaches
    the HAR weights.
    """

    pretrain = False
    joint = True

    def fit(self, fold: LosoFold, har: ModelParams, pbd: ModelParams, timer: Timer) -> TrainedFold:
        snapshot = None
        if self.pretrain:
            timer.start("pretrain")
            snapshot = pretrain_har(fold, self.graph, har, self.config, self.pretrain_loss())
            timer.stop("pretrain")
            har.load_arrays(snapshot.params)

        timer.start("joint")
        har_log, pbd_log = self._train_jointly(fold, har, pbd, len(snapshot.log) if snapshot else 0)
        timer.stop("joint")

        return TrainedFold(
            fold=fold.test_subject,
            strategy=self.name,
            har_params=har.arrays(),
            pbd_params=pbd.arrays(),
            har_log=(snapshot.log if snapshot else []) + har_log,
            pbd_log=pbd_log,
            selected_har_epoch=snapshot.epoch if snapshot else None,
            har_snapshot=snapshot.params if snapshot else None,
        )

    def _train_jointly(
        self, fold: LosoFold, har: ModelParams, pbd: ModelParams, offset: int
    ) -> tuple[list[EpochLog], list[EpochLog]]:
        config = self.config
        windows = fold.train_windows
        activity = np.array([w.activity_label for w in windows], dtype=np.int64)
        protective = np.array([int(w.protective_label) for w in windows], dtype=np.int64)
        k_har = har.spec.n_classes
        k_pbd = pbd.spec.n_classes
        har_counts = ClassCounts.from_labels(activity, k_har)
        pbd_counts = ClassCounts.from_labels(protective, k_pbd)
        har_loss_config = self.har_loss()
        pbd_loss_config = self.pbd_loss()
        w_har, w_pbd = config.loss_weights

        opt_har = Adam(har.named(), lr=config.lr_har)
        opt_pbd = Adam(pbd.named(), lr=config.lr_pbd)
        stream = f"{fold.test_subject}/joint"
        shuffle_rng = derive_rng(config.seed, "shuffle", stream)
        dropout_rng = derive_rng(config.seed, "dropout", stream)

        har_log: list[EpochLog] = []
        pbd_log: list[EpochLog] = []
        # the joint phase is the one that trains PBD
        for epoch in range(1, config.effective_pbd_epochs + 1):
            started = time.perf_counter()
            pred_act = np.zeros(len(windows), dtype=np.int64)
            pred_prot = np.zeros(len(windows), dtype=np.int64)
            loss_har = 0.0
            loss_pbd = 0.0
            for idx in minibatches(len(windows), config.batch_size, shuffle_rng):
                x = stack_windows([windows[i] for i in idx], self.graph)
                with ComputationRecord() as record:
                    p_har = module_forward(x, self.graph, har, training=True, rng=dropout_rng)
                    x_pbd = hierarchical_input(x, p_har) if config.hierarchical else x
                    p_pbd = module_forward(x_pbd, self.graph, pbd, training=True, rng=dropout_rng)
                    l_har = cfcc(p_har, one_hot(activity[idx], k_har), har_counts, har_loss_config)
                    l_pbd = cfcc(p_pbd, one_hot(protective[idx], k_pbd), pbd_counts, pbd_loss_config)
                    total = w_har * l_har + w_pbd * l_pbd
                gradients = backward(record, total)
                opt_har.step(gradients)
                opt_pbd.step(gradients)
                loss_har += l_har.item()
                loss_pbd += l_pbd.item()
                pred_act[idx] = np.argmax(p_har.value, axis=-1)
                pred_prot[idx] = np.argmax(p_pbd.value, axis=-1)

            seconds = time.perf_counter() - started
            har_entry = epoch_metrics(offset + epoch, loss_har, activity, pred_act, k_har)
            pbd_entry = epoch_metrics(epoch, loss_pbd, protective, pred_prot, k_pbd)
            record_epoch("HAR", har_entry, seconds, stream=stream)
            record_epoch("PBD", pbd_entry, seconds, stream=stream)
            har_log.append(har_entry)
            pbd_log.append(pbd_entry)
        return har_log, pbd_log


@training_strategy("JointHarCfcc")
class JointHarCfcc(JointStrategy):
    default_har_cfcc = True
    default_pbd_cfcc = False


@training_strategy("JointPbdCfcc")
class JointPbdCfcc(JointStrategy):
    default_har_cfcc = False
    default_pbd_cfcc = True


@training_strategy("JointBothCfcc")
class JointBothCfcc(JointStrategy):
    default_har_cfcc = True
    default_pbd_cfcc = True


@training_strategy("PretrainedJointHarCfcc")
class PretrainedJointHarCfcc(JointHarCfcc):
    pretrain = True


@training_strategy("PretrainedJointPbdCfcc")
class PretrainedJointPbdCfcc(JointPbdCfcc):
    pretrain = True


@training_strategy("PretrainedJointBothCfcc")
class PretrainedJointBothCfcc(JointBothCfcc):
    pretrain = True
