"""
Small residual networks with manual backpropagation, Adam and early stopping.
"""

from .checkpoint import load_checkpoint, save_checkpoint
from .layers import BatchNorm, Conv2D, Dense, Dropout, GlobalAvgPool, Layer, ReLU, ResidualBlock
from .network import ActivationTrace, LayerSpec, Network, NetworkConfig, mini_resnet
from .optim import AdamState, adam_step
from .training import EpochStats, TrainReport, TrainSchedule, accuracy_from_logits, evaluate, train

__all__ = [
    "ActivationTrace",
    "AdamState",
    "BatchNorm",
    "Conv2D",
    "Dense",
    "Dropout",
    "EpochStats",
    "GlobalAvgPool",
    "Layer",
    "LayerSpec",
    "Network",
    "NetworkConfig",
    "ReLU",
    "ResidualBlock",
    "TrainReport",
    "TrainSchedule",
    "accuracy_from_logits",
    "adam_step",
    "evaluate",
    "load_checkpoint",
    "mini_resnet",
    "save_checkpoint",
    "train",
]
