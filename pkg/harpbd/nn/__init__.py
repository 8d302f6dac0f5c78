from harpbd.nn.layers import (
    GCLayerParams,
    HeadParams,
    LSTMLayerParams,
    dense_softmax,
    dropout,
    gc_forward,
    lstm_forward,
)
from harpbd.nn.losses import ClassCounts, LossConfig, cb_weight, cce, cfcc, focal_factor, one_hot
from harpbd.nn.network import (
    ModelParams,
    ModelSpec,
    har_forward,
    hard_labels,
    hierarchical_input,
    module_forward,
    pbd_forward,
)

__all__ = [
    "ClassCounts",
    "GCLayerParams",
    "HeadParams",
    "LSTMLayerParams",
    "LossConfig",
    "ModelParams",
    "ModelSpec",
    "cb_weight",
    "cce",
    "cfcc",
    "dense_softmax",
    "dropout",
    "focal_factor",
    "gc_forward",
    "har_forward",
    "hard_labels",
    "hierarchical_input",
    "lstm_forward",
    "module_forward",
    "one_hot",
    "pbd_forward",
]
