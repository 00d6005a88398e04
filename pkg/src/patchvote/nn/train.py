"""SGD-momentum training with random-occlusion augmentation."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from ..data import Dataset, augment_batch
from ..occlusion import DefenseConfig, make_mask, occlusion_positions
from .model import ModelParams, accuracy, loss_and_gradients


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 3
    batch_size: int = 128
    learning_rate: float = 0.05
    momentum: float = 0.9
    seed: int = 0
    occlusion_augment: bool = True
    shift_augment: bool = True
    max_shift: int = 2
    flip_augment: bool = False

    def __post_init__(self) -> None:
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")


def train(
    params: ModelParams,
    train_set: Dataset,
    config: TrainConfig,
    defense: DefenseConfig,
    val_set: Dataset | None = None,
    log=None,
) -> tuple[ModelParams, list[dict]]:
    """Train a private copy of `params`; returns (trained params, epoch metrics).

    With occlusion augmentation on, every presented sample is occluded at a
    fresh uniform window position and the window's mask is fed to the model's
    mask input; with it off the mask is all ones.  Deterministic for a fixed
    seed in a single-threaded run.
    """
    params = params.copy()
    rng = np.random.default_rng(config.seed)
    positions = occlusion_positions((train_set.height, train_set.width), defense)
    image_hw = (train_set.height, train_set.width)

    velocity = {
        (i, name): np.zeros_like(arr) for i, name, arr in params.weighted()
    }
    metrics: list[dict] = []

    for epoch in range(config.epochs):
        t0 = time.time()
        order = rng.permutation(len(train_set))
        loss_sum, batches = 0.0, 0
        for lo in range(0, len(order), config.batch_size):
            idx = order[lo:lo + config.batch_size]
            images = train_set.images[idx]
            if config.shift_augment:
                images = augment_batch(
                    images, rng, max_shift=config.max_shift, flip=config.flip_augment
                )
            if config.occlusion_augment:
                masks = np.empty(images.shape[:3], dtype=images.dtype)
                choices = rng.integers(len(positions), size=len(idx))
                for k, ci in enumerate(choices):
                    masks[k] = make_mask(positions[ci], defense, image_hw)
                images = images * masks[..., None]
            else:
                masks = None

            loss, grads, _ = loss_and_gradients(params, images, masks, train_set.labels[idx])
            loss_sum += loss
            batches += 1
            for i, name, arr in params.weighted():
                v = velocity[(i, name)]
                v *= config.momentum
                v -= config.learning_rate * grads[i][name]
                arr += v

        row = {"epoch": epoch + 1, "train_loss": loss_sum / max(batches, 1),
               "seconds": time.time() - t0}
        if val_set is not None:
            row["val_accuracy"] = accuracy(params, val_set.images, val_set.labels)
        metrics.append(row)
        if log:
            log(row)
    return params, metrics
