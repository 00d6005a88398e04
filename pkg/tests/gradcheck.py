"""Finite-difference gradient oracle for the network engine.

Central differences are only valid where the loss is locally smooth, so each
probed coordinate is accepted only if the ReLU sign patterns and pool argmax
choices are identical at +step and -step; coordinates whose perturbation
crosses a kink are resampled.
"""

from __future__ import annotations

import numpy as np

from patchvote.nn.model import MICRO_BATCH, _pad_chunk, loss_and_gradients


def activation_pattern(params, images, masks):
    """ReLU sign masks and pool argmax indices: the id of the current
    piecewise-linear region.  Only real rows count (padding rows sit exactly
    on the bias values and would flip under any bias perturbation)."""
    images = np.asarray(images)
    n = len(images)
    x = _pad_chunk(images, MICRO_BATCH)
    m = _pad_chunk(np.asarray(masks), MICRO_BATCH)
    pattern = []
    for layer in params.layers:
        x, cache = layer.forward(x, mask=m)
        if layer.kind == "relu":
            pattern.append(cache[:n].copy())
        elif layer.kind == "maxpool":
            pattern.append(cache[1][:n].copy())
    return pattern


def _same_pattern(a, b) -> bool:
    return all(np.array_equal(p, q) for p, q in zip(a, b))


def check_weight_gradients(
    params,
    images,
    masks,
    labels,
    step: float = 1e-3,
    coords_per_tensor: int = 8,
    seed: int = 0,
) -> float:
    """Worst relative error between analytic and central-difference gradients
    over sampled smooth coordinates of every weight tensor."""
    _, grads, _ = loss_and_gradients(params, images, masks, labels)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for li, name, arr in params.weighted():
        flat = arr.ravel()
        analytic = grads[li][name].ravel()
        accepted = 0
        candidates = rng.permutation(arr.size)
        for idx in candidates:
            if accepted >= min(coords_per_tensor, arr.size):
                break
            orig = flat[idx]
            flat[idx] = orig + step
            pat_p = activation_pattern(params, images, masks)
            loss_p, _, _ = loss_and_gradients(params, images, masks, labels)
            flat[idx] = orig - step
            pat_m = activation_pattern(params, images, masks)
            loss_m, _, _ = loss_and_gradients(params, images, masks, labels)
            flat[idx] = orig
            if not _same_pattern(pat_p, pat_m):
                continue  # kink crossed; finite differences are invalid here
            accepted += 1
            fd = (loss_p - loss_m) / (2.0 * step)
            err = abs(fd - analytic[idx]) / max(abs(fd), abs(analytic[idx]), 1e-8)
            worst = max(worst, err)
        assert accepted > 0, f"no smooth coordinates found for layer {li} {name}"
    return worst


def check_input_gradients(
    params,
    image,
    mask,
    target: int,
    step: float = 1e-3,
    coords: int = 20,
    seed: int = 0,
) -> float:
    """Worst relative error of the pixel gradient over sampled smooth,
    visible coordinates."""
    from patchvote.nn.model import forward, input_gradient

    analytic = input_gradient(params, image, mask, target)
    rng = np.random.default_rng(seed)
    h, w, c = image.shape
    worst = 0.0
    accepted = 0
    for _ in range(coords * 10):
        if accepted >= coords:
            break
        i, j, ch = rng.integers(h), rng.integers(w), rng.integers(c)
        if mask is not None and mask[i, j] == 0:
            continue  # gradient is identically zero there; tested separately
        perturbed = image.copy()
        perturbed[i, j, ch] += step
        pat_p = activation_pattern(params, perturbed[None],
                                   np.ones((1, h, w)) if mask is None else mask[None])
        loss_p = -np.log(forward(params, perturbed, mask)[target])
        perturbed = image.copy()
        perturbed[i, j, ch] -= step
        pat_m = activation_pattern(params, perturbed[None],
                                   np.ones((1, h, w)) if mask is None else mask[None])
        loss_m = -np.log(forward(params, perturbed, mask)[target])
        if not _same_pattern(pat_p, pat_m):
            continue
        accepted += 1
        fd = (loss_p - loss_m) / (2.0 * step)
        err = abs(fd - analytic[i, j, ch]) / max(abs(fd), abs(analytic[i, j, ch]), 1e-8)
        worst = max(worst, err)
    assert accepted > 0, "no smooth input coordinates found"
    return worst
