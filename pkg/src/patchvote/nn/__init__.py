"""Mask-aware CNN engine: layers, model, training, checkpointing."""

from .checkpoint import CheckpointError, load_params, save_params
from .layers import Conv, Dense, Flatten, MaxPool, ReLU, Softmax, SparseConv
from .model import (
    MICRO_BATCH,
    ModelParams,
    accuracy,
    batch_input_gradients,
    desk_cnn,
    forward,
    forward_batch,
    input_gradient,
    loss_and_gradients,
    predict,
)
from .train import TrainConfig, train

__all__ = [
    "CheckpointError",
    "Conv",
    "Dense",
    "Flatten",
    "MICRO_BATCH",
    "MaxPool",
    "ModelParams",
    "ReLU",
    "Softmax",
    "SparseConv",
    "TrainConfig",
    "accuracy",
    "batch_input_gradients",
    "desk_cnn",
    "forward",
    "forward_batch",
    "input_gradient",
    "load_params",
    "loss_and_gradients",
    "predict",
    "save_params",
    "train",
]
