from harpbd.models.strategies.frozen import PretrainedFrozen
from harpbd.models.strategies.joint import (
    JointBothCfcc,
    JointHarCfcc,
    JointPbdCfcc,
    JointStrategy,
    PretrainedJointBothCfcc,
    PretrainedJointHarCfcc,
    PretrainedJointPbdCfcc,
)

__all__ = [
    "JointBothCfcc",
    "JointHarCfcc",
    "JointPbdCfcc",
    "JointStrategy",
    "PretrainedFrozen",
    "PretrainedJointBothCfcc",
    "PretrainedJointHarCfcc",
    "PretrainedJointPbdCfcc",
]
