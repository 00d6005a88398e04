"""Prediction grids: classifier confidences at every occlusion position."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .nn.model import ModelParams, forward_batch
from .occlusion import DefenseConfig, apply_mask, make_mask, position_axes


@dataclass
class PredictionGrid:
    """Per-occlusion-position class confidences.

    scores[i, j] holds the classifier's softmax output with the occlusion
    window at (rows[i], cols[j]).
    """

    scores: np.ndarray  # [Gh, Gw, K]
    rows: np.ndarray    # window top coordinates, [Gh]
    cols: np.ndarray    # window left coordinates, [Gw]
    config: DefenseConfig
    image_hw: tuple[int, int]
    image_id: int | str | None = None
    true_label: int | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.scores.shape[0], self.scores.shape[1]

    @property
    def classes(self) -> int:
        return self.scores.shape[2]

    def position(self, i: int, j: int) -> tuple[int, int]:
        return int(self.rows[i]), int(self.cols[j])

    def argmax_grid(self) -> np.ndarray:
        """Per-cell winning class (ties break toward the lowest index)."""
        return self.scores.argmax(axis=-1)


def prediction_grid(
    params: ModelParams,
    image: np.ndarray,
    config: DefenseConfig,
    image_id: int | str | None = None,
    true_label: int | None = None,
    batch_size: int = 256,
) -> PredictionGrid:
    """Slide the occlusion window over `image` and record the classifier output
    at every position."""
    h, w, c = params.input_shape
    if image.shape != (h, w, c):
        raise ValueError(f"image shape {image.shape} does not match model input {(h, w, c)}")
    rows, cols = position_axes((h, w), config)
    positions = [(a, b) for a in rows for b in cols]
    n = len(positions)
    k = params.classes

    scores = np.empty((n, k), dtype=image.dtype)
    for lo in range(0, n, batch_size):
        chunk = positions[lo:lo + batch_size]
        occluded = np.empty((len(chunk), h, w, c), dtype=image.dtype)
        masks = np.empty((len(chunk), h, w), dtype=image.dtype)
        for i, pos in enumerate(chunk):
            mask = make_mask(pos, config, (h, w))
            masks[i] = mask
            occluded[i] = apply_mask(image, mask)
        scores[lo:lo + len(chunk)] = forward_batch(params, occluded, masks)

    return PredictionGrid(
        scores=scores.reshape(len(rows), len(cols), k),
        rows=np.asarray(rows),
        cols=np.asarray(cols),
        config=config,
        image_hw=(h, w),
        image_id=image_id,
        true_label=true_label,
    )


def grid_to_json(grid: PredictionGrid) -> dict:
    """Interchange form; scores serialize as decimal reals that round-trip
    float32 exactly."""
    cfg = grid.config
    return {
        "image_id": grid.image_id,
        "true_label": grid.true_label,
        "patch": cfg.patch_size if cfg.square else [cfg.ph, cfg.pw],
        "occlusion": cfg.qh if cfg.square else [cfg.qh, cfg.qw],
        "stride": cfg.stride,
        "border_policy": cfg.border,
        "classes": grid.classes,
        "image_size": list(grid.image_hw),
        "scores": [[[float(v) for v in cell] for cell in row] for row in grid.scores],
    }


def save_grid(grid: PredictionGrid, path) -> None:
    Path(path).write_text(json.dumps(grid_to_json(grid)), encoding="utf-8")


def _pair(value) -> tuple[int, int]:
    if isinstance(value, (list, tuple)):
        return int(value[0]), int(value[1])
    return int(value), int(value)


def grid_from_json(doc: dict, config: DefenseConfig | None = None) -> PredictionGrid:
    """Rebuild a grid from its interchange form.

    Geometry (patch, stride, border) comes from the file; decision parameters
    (tau, vote mode) come from `config` when given, else defaults.
    """
    ph, pw = _pair(doc["patch"])
    base = config if config is not None else DefenseConfig()
    cfg = replace(
        base,
        patch_size=ph,
        patch_height=None if ph == pw else ph,
        patch_width=None if ph == pw else pw,
        stride=int(doc["stride"]),
        border=doc["border_policy"],
    )
    qh, qw = _pair(doc["occlusion"])
    if (qh, qw) != (cfg.qh, cfg.qw):
        raise ValueError(
            f"inconsistent geometry: occlusion {qh}x{qw} does not match "
            f"patch {ph}x{pw} at stride {cfg.stride} (expected {cfg.qh}x{cfg.qw})"
        )
    scores = np.asarray(doc["scores"], dtype=np.float32)
    if scores.ndim != 3 or scores.shape[2] != int(doc["classes"]):
        raise ValueError(f"malformed scores array of shape {scores.shape}")

    gh, gw = scores.shape[:2]
    if "image_size" in doc:
        h, w = int(doc["image_size"][0]), int(doc["image_size"][1])
    else:
        # derive assuming the window positions fit the image side exactly
        s = cfg.stride
        if cfg.border == "interior":
            h, w = (gh - 1) * s + cfg.qh, (gw - 1) * s + cfg.qw
        else:
            h, w = (gh - 1) * s + 2 * cfg.ph - cfg.qh, (gw - 1) * s + 2 * cfg.pw - cfg.qw
    rows, cols = position_axes((h, w), cfg)
    if (len(rows), len(cols)) != (gh, gw):
        raise ValueError(
            f"scores extent {gh}x{gw} does not match {len(rows)}x{len(cols)} "
            f"window positions for a {h}x{w} image"
        )
    return PredictionGrid(
        scores=scores,
        rows=np.asarray(rows),
        cols=np.asarray(cols),
        config=cfg,
        image_hw=(h, w),
        image_id=doc.get("image_id"),
        true_label=doc.get("true_label"),
    )


def load_grid(path, config: DefenseConfig | None = None) -> PredictionGrid:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return grid_from_json(doc, config)
