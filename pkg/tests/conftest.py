"""Shared fixtures: digit corpus, trained models, defense config.

Data resolution order: real IDX files under MR_DATA_DIR if present, else a
deterministic synthetic digit corpus generated once into tests/_cache.
Trained checkpoints are cached there too, keyed by a fingerprint of the data
and training configuration, so repeated runs skip the training cost.
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

import numpy as np
import pytest

from patchvote.data import SplitSpec, load_idx, random_split
from patchvote.nn.checkpoint import load_params, save_params
from patchvote.nn.model import desk_cnn
from patchvote.nn.train import TrainConfig, train
from patchvote.occlusion import DefenseConfig

CACHE = Path(__file__).parent / "_cache"
SYNTH_COUNT = 12000
SYNTH_SEED = 0


def _find_real_files():
    root = os.environ.get("MR_DATA_DIR")
    if not root:
        return None
    for d in (Path(root) / "mnist", Path(root)):
        for ext in ("", ".gz"):
            images = d / ("train-images-idx3-ubyte" + ext)
            labels = d / ("train-labels-idx1-ubyte" + ext)
            if images.exists() and labels.exists():
                return images, labels
    return None


@pytest.fixture(scope="session")
def digit_files():
    """(images_path, labels_path, is_real_data)."""
    real = _find_real_files()
    if real:
        return real[0], real[1], True
    CACHE.mkdir(exist_ok=True)
    images = CACHE / "train-images-idx3-ubyte"
    labels = CACHE / "train-labels-idx1-ubyte"
    marker = CACHE / "corpus.json"
    want = {"count": SYNTH_COUNT, "seed": SYNTH_SEED}
    if not (images.exists() and labels.exists() and
            marker.exists() and json.loads(marker.read_text()) == want):
        from synth_digits import write_idx

        write_idx(CACHE, count=SYNTH_COUNT, seed=SYNTH_SEED)
        marker.write_text(json.dumps(want))
    return images, labels, False


@pytest.fixture(scope="session")
def dataset(digit_files):
    images, labels, _ = digit_files
    return load_idx(images, labels, classes=10)


@pytest.fixture(scope="session")
def splits(dataset):
    return random_split(dataset, SplitSpec(0.9, seed=0))


@pytest.fixture(scope="session")
def train_set(splits):
    return splits[0]


@pytest.fixture(scope="session")
def val_set(splits):
    return splits[1]


@pytest.fixture(scope="session")
def default_config():
    return DefenseConfig(patch_size=5)  # padded border, soft voting, tau 0.9


def _fingerprint(digit_files, config: TrainConfig) -> str:
    h = hashlib.sha256()
    for path in digit_files[:2]:
        h.update(Path(path).read_bytes())
    h.update(repr(config).encode())
    return h.hexdigest()[:16]


def _trained(digit_files, train_set, val_set, occlusion_augment: bool):
    config = TrainConfig(epochs=3, seed=0, occlusion_augment=occlusion_augment)
    tag = "aug" if occlusion_augment else "plain"
    CACHE.mkdir(exist_ok=True)
    ckpt = CACHE / f"model_{tag}.ckpt"
    meta = CACHE / f"model_{tag}.json"
    fp = _fingerprint(digit_files, config)
    if ckpt.exists() and meta.exists():
        stored = json.loads(meta.read_text())
        if stored.get("fingerprint") == fp:
            return load_params(ckpt), stored["metrics"]
    params = desk_cnn(input_hw=(train_set.height, train_set.width),
                      channels=train_set.channels, classes=train_set.classes, seed=0)
    trained_params, metrics = train(
        params, train_set, config, DefenseConfig(patch_size=5), val_set=val_set
    )
    save_params(trained_params, ckpt)
    meta.write_text(json.dumps({"fingerprint": fp, "metrics": metrics}))
    return trained_params, metrics


@pytest.fixture(scope="session")
def trained_model(digit_files, train_set, val_set):
    """(params, metrics) for the occlusion-augmented model."""
    return _trained(digit_files, train_set, val_set, occlusion_augment=True)


@pytest.fixture(scope="session")
def trained_model_plain(digit_files, train_set, val_set):
    """(params, metrics) for the model trained without occlusion."""
    return _trained(digit_files, train_set, val_set, occlusion_augment=False)
