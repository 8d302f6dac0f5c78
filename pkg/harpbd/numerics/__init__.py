from harpbd.numerics.checkpoint import load_checkpoint, save_checkpoint
from harpbd.numerics.gradcheck import finite_difference_check
from harpbd.numerics.optim import Adam, AdamState, adam_step
from harpbd.numerics.rng import derive_rng
from harpbd.numerics.tensor import ComputationRecord, Tensor, backward

__all__ = [
    "Adam",
    "AdamState",
    "ComputationRecord",
    "Tensor",
    "adam_step",
    "backward",
    "derive_rng",
    "finite_difference_check",
    "load_checkpoint",
    "save_checkpoint",
]
