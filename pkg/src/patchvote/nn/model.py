"""Inner classifier: mask-aware CNN with exact gradients.

The first weighted layer is a sparsity-renormalized convolution that consumes
a binary visibility mask alongside the image; deeper layers are standard.

All forward and backward passes run in fixed-size micro-batches
(MICRO_BATCH rows, zero-padded), so every matrix product has the same shape
regardless of the caller's batch size.  This makes results bit-identical
whether samples are evaluated one at a time or in bulk.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .layers import (
    Conv,
    Dense,
    Flatten,
    MaxPool,
    ReLU,
    Softmax,
    SparseConv,
    WEIGHTED_KINDS,
)

MICRO_BATCH = 64


@dataclass
class ModelParams:
    """Ordered layer list plus the input geometry it expects."""

    layers: list
    input_shape: tuple[int, int, int]  # (H, W, C)
    classes: int

    def __post_init__(self) -> None:
        validate_architecture(self)

    def copy(self) -> "ModelParams":
        return copy.deepcopy(self)

    def weighted(self):
        """(layer_index, name, array) for every weight tensor, in order."""
        for i, layer in enumerate(self.layers):
            for name, arr in layer.params().items():
                yield i, name, arr

    @property
    def dtype(self):
        for _, _, arr in self.weighted():
            return arr.dtype
        return np.float32

    def weight_count(self) -> int:
        return sum(arr.size for _, _, arr in self.weighted())


def validate_architecture(params: ModelParams) -> None:
    h, w, c = params.input_shape
    shape = (h, w, c)
    flat = False
    seen_weighted = False
    for i, layer in enumerate(params.layers):
        kind = layer.kind
        if kind in ("sparse-conv", "conv"):
            if flat:
                raise ValueError(f"layer {i}: convolution after flatten")
            if kind == "sparse-conv" and seen_weighted:
                raise ValueError(f"layer {i}: only the first weighted layer may be sparse-conv")
            kh, kw, cin, cout = layer.w.shape
            if cin != shape[2]:
                raise ValueError(f"layer {i}: expects {cin} channels, input has {shape[2]}")
            shape = (shape[0], shape[1], cout)
            seen_weighted = True
        elif kind == "maxpool":
            if flat:
                raise ValueError(f"layer {i}: maxpool after flatten")
            s = layer.size
            if shape[0] % s or shape[1] % s:
                raise ValueError(f"layer {i}: pool size {s} does not divide {shape[0]}x{shape[1]}")
            shape = (shape[0] // s, shape[1] // s, shape[2])
        elif kind == "flatten":
            shape = (shape[0] * shape[1] * shape[2],)
            flat = True
        elif kind == "dense":
            if not flat:
                raise ValueError(f"layer {i}: dense before flatten")
            din, dout = layer.w.shape
            if din != shape[0]:
                raise ValueError(f"layer {i}: dense expects {din} features, input has {shape[0]}")
            shape = (dout,)
            seen_weighted = True
        elif kind in ("relu", "softmax"):
            pass
        else:
            raise ValueError(f"layer {i}: unknown kind {kind!r}")
    if not params.layers or params.layers[-1].kind != "softmax":
        raise ValueError("softmax must be the last layer")
    if shape != (params.classes,):
        raise ValueError(f"final feature count {shape} does not match classes {params.classes}")


def desk_cnn(
    input_hw: tuple[int, int] = (28, 28),
    channels: int = 1,
    classes: int = 10,
    conv1: int = 32,
    conv2: int = 64,
    hidden: int = 128,
    seed: int = 0,
    dtype=np.float32,
) -> ModelParams:
    """Small trainable CNN: sparse-conv, conv, two dense layers (~0.42M weights
    at the defaults)."""
    rng = np.random.default_rng(seed)
    h, w = input_hw

    def he_uniform(shape, fan_in):
        limit = np.sqrt(6.0 / fan_in)
        return rng.uniform(-limit, limit, size=shape).astype(dtype)

    def zeros(n):
        return np.zeros(n, dtype=dtype)

    flat = (h // 4) * (w // 4) * conv2
    layers = [
        SparseConv(he_uniform((3, 3, channels, conv1), 9 * channels), zeros(conv1)),
        ReLU(),
        MaxPool(2),
        Conv(he_uniform((3, 3, conv1, conv2), 9 * conv1), zeros(conv2)),
        ReLU(),
        MaxPool(2),
        Flatten(),
        Dense(he_uniform((flat, hidden), flat), zeros(hidden)),
        ReLU(),
        Dense(he_uniform((hidden, classes), hidden), zeros(classes)),
        Softmax(),
    ]
    return ModelParams(layers, (h, w, channels), classes)


def _as_batch(params: ModelParams, images: np.ndarray, masks: np.ndarray | None):
    h, w, c = params.input_shape
    images = np.asarray(images)
    if images.ndim == 3:
        images = images[None]
    if images.shape[1:] != (h, w, c):
        raise ValueError(f"shape mismatch: model expects {(h, w, c)}, got {images.shape[1:]}")
    if masks is None:
        masks = np.ones(images.shape[:3], dtype=images.dtype)
    else:
        masks = np.asarray(masks)
        if masks.ndim == 2:
            masks = masks[None]
        if masks.shape != images.shape[:3]:
            raise ValueError(f"shape mismatch: images {images.shape} vs masks {masks.shape}")
    dtype = params.dtype
    return images.astype(dtype, copy=False), masks.astype(dtype, copy=False)


def _pad_chunk(x: np.ndarray, n: int) -> np.ndarray:
    if len(x) == n:
        return x
    pad = np.zeros((n - len(x),) + x.shape[1:], dtype=x.dtype)
    return np.concatenate([x, pad])


def _run_chunk(params: ModelParams, x: np.ndarray, mask: np.ndarray, keep: bool):
    caches = [] if keep else None
    logits = None
    for i, layer in enumerate(params.layers):
        if i == len(params.layers) - 1:
            logits = x  # input to the final softmax layer
        x, cache = layer.forward(x, mask=mask)
        if keep:
            caches.append(cache)
    return x, caches, logits


def forward_batch(
    params: ModelParams, images: np.ndarray, masks: np.ndarray | None = None
) -> np.ndarray:
    """Class confidences [B, K]; each row is a softmax distribution."""
    images, masks = _as_batch(params, images, masks)
    b = len(images)
    out = np.empty((b, params.classes), dtype=images.dtype)
    for lo in range(0, b, MICRO_BATCH):
        hi = min(lo + MICRO_BATCH, b)
        x = _pad_chunk(images[lo:hi], MICRO_BATCH)
        m = _pad_chunk(masks[lo:hi], MICRO_BATCH)
        probs, _, _ = _run_chunk(params, x, m, keep=False)
        out[lo:hi] = probs[:hi - lo]
    return out


def forward(params: ModelParams, image: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    """Class confidences [K] for a single image (with optional occlusion mask)."""
    return forward_batch(params, image[None], None if mask is None else mask[None])[0]


def predict(params: ModelParams, images: np.ndarray, masks: np.ndarray | None = None) -> np.ndarray:
    return forward_batch(params, images, masks).argmax(axis=-1)


def accuracy(params: ModelParams, images: np.ndarray, labels: np.ndarray) -> float:
    return float((predict(params, images) == np.asarray(labels)).mean())


def _loss_grads_core(
    params: ModelParams,
    images: np.ndarray,
    masks: np.ndarray | None,
    labels: np.ndarray,
    need_param_grads: bool = True,
    need_input_grads: bool = False,
    mean: bool = True,
):
    images, masks = _as_batch(params, images, masks)
    b = len(images)
    if b == 0:
        raise ValueError("empty batch")
    labels = np.asarray(labels).reshape(-1)
    if len(labels) != b:
        raise ValueError(f"count mismatch: {b} images vs {len(labels)} labels")
    if labels.min() < 0 or labels.max() >= params.classes:
        raise ValueError(f"label out of range [0, {params.classes})")

    grad_sums = [None] * len(params.layers)
    dx_out = np.empty_like(images) if need_input_grads else None
    probs_out = np.empty((b, params.classes), dtype=images.dtype)
    loss_sum = 0.0

    for lo in range(0, b, MICRO_BATCH):
        hi = min(lo + MICRO_BATCH, b)
        n_real = hi - lo
        x = _pad_chunk(images[lo:hi], MICRO_BATCH)
        m = _pad_chunk(masks[lo:hi], MICRO_BATCH)
        probs, caches, logits = _run_chunk(params, x, m, keep=True)
        probs_out[lo:hi] = probs[:n_real]

        # stable cross-entropy straight from the logits
        z = logits[:n_real] - logits[:n_real].max(axis=-1, keepdims=True)
        logp = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
        y = labels[lo:hi]
        loss_sum += float(-logp[np.arange(n_real), y].sum())

        dlogits = probs.copy()
        dlogits[np.arange(n_real), y] -= 1.0
        dlogits[n_real:] = 0.0

        # backprop from the logits: skip the softmax layer itself
        dy = dlogits
        for li in range(len(params.layers) - 2, -1, -1):
            dy, grads = params.layers[li].backward(dy, caches[li], need_param_grads)
            if grads is not None:
                if grad_sums[li] is None:
                    grad_sums[li] = grads
                else:
                    for name in grads:
                        grad_sums[li][name] += grads[name]
        if need_input_grads:
            dx_out[lo:hi] = dy[:n_real]

    denom = float(b) if mean else 1.0
    loss = loss_sum / denom
    if need_param_grads:
        for g in grad_sums:
            if g is not None:
                for name in g:
                    g[name] /= denom
    return loss, grad_sums if need_param_grads else None, dx_out, probs_out


def loss_and_gradients(
    params: ModelParams,
    images: np.ndarray,
    masks: np.ndarray | None,
    labels: np.ndarray,
    need_input_grads: bool = False,
):
    """Batch-mean cross-entropy and gradients for every weight.

    Returns (loss, grads, input_grads) where grads is a list aligned with
    params.layers (None for weightless layers) and input_grads is None unless
    requested.
    """
    loss, grads, dx, _ = _loss_grads_core(
        params, images, masks, labels,
        need_param_grads=True, need_input_grads=need_input_grads, mean=True,
    )
    return loss, grads, dx


def input_gradient(
    params: ModelParams, image: np.ndarray, mask: np.ndarray | None, target: int
) -> np.ndarray:
    """d(-log softmax_target)/d(pixels) for a single image."""
    _, _, dx, _ = _loss_grads_core(
        params, image[None], None if mask is None else mask[None], np.asarray([target]),
        need_param_grads=False, need_input_grads=True, mean=True,
    )
    return dx[0]


def batch_input_gradients(
    params: ModelParams, images: np.ndarray, masks: np.ndarray | None, targets
) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample input gradients of -log p_target plus the forward confidences.

    Gradients are per-sample (not batch-mean scaled); used by the patch attack.
    """
    targets = np.asarray(targets).reshape(-1)
    if targets.size == 1:
        targets = np.full(len(images), int(targets[0]))
    _, _, dx, probs = _loss_grads_core(
        params, images, masks, targets,
        need_param_grads=False, need_input_grads=True, mean=False,
    )
    return dx, probs
