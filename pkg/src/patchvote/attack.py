"""Patch attack on the undefended inner model: per-position PGD with a cyclic
step-size schedule, least-likely target selection, and early stopping."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .nn.model import ModelParams, batch_input_gradients, forward


@dataclass(frozen=True)
class AttackConfig:
    patch_size: int = 5
    steps_per_cycle: int = 10
    step_min: float = 0.002
    step_max: float = 0.3
    max_steps: int = 150
    success_confidence: float = 0.6
    stall_window: int = 20
    stall_threshold: float = 0.002
    seed: int = 0

    def __post_init__(self) -> None:
        if self.max_steps % self.steps_per_cycle:
            raise ValueError("max_steps must be a multiple of steps_per_cycle")
        if not 0 < self.step_min < self.step_max:
            raise ValueError("need 0 < step_min < step_max")
        if self.patch_size < 1:
            raise ValueError("patch_size must be >= 1")


@dataclass
class PatchAttackResult:
    success: bool
    position: tuple[int, int]
    patch: np.ndarray        # [p, p, C] pixels in [0, 1]
    confidence: float        # best achieved target confidence
    steps: int
    target: int


@dataclass
class AttackImageReport:
    image_id: int | str | None
    target: int
    success: bool
    best: PatchAttackResult
    success_count: int
    results: list

    def to_json(self) -> dict:
        return {
            "image_id": self.image_id,
            "target": self.target,
            "success": self.success,
            "best_position": list(self.best.position),
            "confidence": self.best.confidence,
            "steps": self.best.steps,
            "successful_position_count": self.success_count,
        }


def choose_target(confidences, rng: np.random.Generator, tolerance: float = 0.001) -> int:
    """Uniform draw among the classes within `tolerance` of the least likely."""
    conf = np.asarray(confidences, dtype=np.float64)
    candidates = np.flatnonzero(conf <= conf.min() + tolerance)
    return int(rng.choice(candidates))


def cyclic_schedule(config: AttackConfig) -> np.ndarray:
    """Step sizes for every iteration: each cycle descends geometrically from
    step_max to step_min, then restarts."""
    n = config.steps_per_cycle
    ratio = (config.step_min / config.step_max) ** (np.arange(n) / (n - 1))
    return np.tile(config.step_max * ratio, config.max_steps // n)


def _position_rng(config: AttackConfig, pos: tuple[int, int]) -> np.random.Generator:
    # keyed per position so batched and one-at-a-time runs draw the same init
    return np.random.default_rng([config.seed, pos[0], pos[1]])


def _pgd_positions(
    params: ModelParams,
    image: np.ndarray,
    positions: list[tuple[int, int]],
    target: int,
    config: AttackConfig,
) -> list[PatchAttackResult]:
    """PGD at several patch positions of one image, stepped in lockstep.

    Positions drop out of the working batch when they succeed (target
    confidence at or above the threshold, checked at cycle ends) or stall
    (best confidence improved less than stall_threshold over the last
    stall_window steps).
    """
    p = config.patch_size
    h, w, c = image.shape
    n = len(positions)
    schedule = cyclic_schedule(config)

    xs = np.repeat(image[None], n, axis=0)
    for i, (r, col) in enumerate(positions):
        init = _position_rng(config, (r, col)).random((p, p, c), dtype=np.float64)
        xs[i, r:r + p, col:col + p] = init.astype(xs.dtype)

    best_conf = np.full(n, -np.inf)
    best_patch = [xs[i, r:r + p, col:col + p].copy() for i, (r, col) in enumerate(positions)]
    steps_used = np.zeros(n, dtype=int)
    success = np.zeros(n, dtype=bool)
    active = np.arange(n)
    history = np.empty((config.max_steps, n))

    for t in range(config.max_steps):
        if len(active) == 0:
            break
        grads, probs = batch_input_gradients(params, xs[active], None, target)
        conf = probs[:, target].astype(np.float64)

        improved = conf > best_conf[active]
        for k in np.flatnonzero(improved):
            i = active[k]
            r, col = positions[i]
            best_patch[i] = xs[i, r:r + p, col:col + p].copy()
        best_conf[active] = np.maximum(best_conf[active], conf)
        history[t, active] = best_conf[active]
        steps_used[active] = t + 1

        eta = schedule[t]
        for k, i in enumerate(active):
            r, col = positions[i]
            region = xs[i, r:r + p, col:col + p]
            step = eta * np.sign(grads[k, r:r + p, col:col + p])
            xs[i, r:r + p, col:col + p] = np.clip(region - step, 0.0, 1.0)

        if (t + 1) % config.steps_per_cycle == 0:
            succeeded = best_conf[active] >= config.success_confidence
            success[active[succeeded]] = True
            keep = ~succeeded
            if t + 1 >= config.stall_window:
                baseline = history[max(t - config.stall_window, 0), active]
                stalled = (best_conf[active] - baseline) < config.stall_threshold
                keep &= ~stalled
            active = active[keep]

    return [
        PatchAttackResult(
            success=bool(success[i]),
            position=positions[i],
            patch=best_patch[i],
            confidence=float(best_conf[i]),
            steps=int(steps_used[i]),
            target=target,
        )
        for i in range(n)
    ]


def pgd_patch(
    params: ModelParams,
    image: np.ndarray,
    position: tuple[int, int],
    target: int,
    config: AttackConfig,
) -> PatchAttackResult:
    """PGD against the inner model, modifying only the patch rectangle."""
    p = config.patch_size
    h, w, _ = image.shape
    r, col = position
    if not (0 <= r <= h - p and 0 <= col <= w - p):
        raise ValueError(f"invalid patch position {position} for size {p} in {h}x{w}")
    return _pgd_positions(params, image, [position], target, config)[0]


def attack_image(
    params: ModelParams,
    image: np.ndarray,
    label: int | None,
    config: AttackConfig,
    image_id: int | str | None = None,
    positions: list[tuple[int, int]] | None = None,
) -> AttackImageReport:
    """Attack every patch position of one image toward a least-likely target."""
    clean = forward(params, image)
    entropy = [config.seed, image_id] if isinstance(image_id, int) else [config.seed]
    target = choose_target(clean, np.random.default_rng(entropy))
    if positions is None:
        p = config.patch_size
        h, w, _ = image.shape
        positions = [(r, c) for r in range(h - p + 1) for c in range(w - p + 1)]
    results = _pgd_positions(params, image, positions, target, config)
    successes = [res for res in results if res.success]
    best = max(results, key=lambda res: res.confidence)
    return AttackImageReport(
        image_id=image_id,
        target=target,
        success=bool(successes),
        best=best,
        success_count=len(successes),
        results=results,
    )


def replay_confidence(params: ModelParams, image: np.ndarray, result: PatchAttackResult) -> float:
    """Target confidence when the recorded patch is re-applied to the image."""
    p = result.patch.shape[0]
    r, c = result.position
    patched = image.copy()
    patched[r:r + p, c:c + p] = result.patch
    return float(forward(params, patched)[result.target])


def feasibility_sweep(
    params: ModelParams,
    images: np.ndarray,
    sizes,
    config: AttackConfig,
) -> dict[int, float]:
    """Attack success rate (any position succeeds) per patch size."""
    from dataclasses import replace

    rates = {}
    for size in sizes:
        cfg = replace(config, patch_size=int(size))
        hits = sum(
            attack_image(params, img, None, cfg, image_id=i).success
            for i, img in enumerate(images)
        )
        rates[int(size)] = hits / len(images) if len(images) else 0.0
    return rates


def write_attack_report(reports, path) -> None:
    """JSON lines, one object per attacked image."""
    with open(path, "w", encoding="utf-8") as f:
        for rep in reports:
            f.write(json.dumps(rep.to_json()) + "\n")
