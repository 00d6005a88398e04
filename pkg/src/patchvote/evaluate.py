"""Measurement protocols: clean/certified accuracy, tau sweeps, ablations,
multi-trial statistics."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .certify import certify_grid
from .data import Dataset
from .gridgen import PredictionGrid, prediction_grid
from .nn.model import ModelParams, forward_batch
from .occlusion import DefenseConfig
from .vote import ABSTAINED, BENIGN, MALICIOUS

METRIC_COLUMNS = (
    "tau",
    "images",
    "clean_accuracy",
    "certified_accuracy",
    "certified_accuracy_positionwise",
    "abstain_rate",
    "detection_rate",
    "inner_accuracy",
)


@dataclass
class EvalReport:
    """Aggregate rows per tau plus per-image flags for subset-level checks."""

    rows: list[dict]
    per_image: dict[float, dict[str, list]] = field(default_factory=dict)

    def row(self, tau: float) -> dict:
        for r in self.rows:
            if r["tau"] == tau:
                return r
        raise KeyError(f"no row for tau={tau}")

    def to_json(self) -> dict:
        return {"rows": self.rows}

    def write_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_json(), f, indent=2)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.DictWriter(f, fieldnames=METRIC_COLUMNS)
            writer.writeheader()
            for row in self.rows:
                writer.writerow({k: row.get(k) for k in METRIC_COLUMNS})


def eval_indices(n_val: int, count: int, seed: int) -> np.ndarray:
    """Seeded evaluation subset; count <= 0 selects the full set."""
    if count <= 0 or count >= n_val:
        return np.arange(n_val)
    return np.sort(np.random.default_rng(seed).permutation(n_val)[:count])


def build_grids(
    params: ModelParams,
    dataset: Dataset,
    indices,
    config: DefenseConfig,
    progress=None,
) -> list[PredictionGrid]:
    grids = []
    for n, i in enumerate(indices):
        grids.append(
            prediction_grid(
                params,
                dataset.images[i],
                config,
                image_id=int(i),
                true_label=int(dataset.labels[i]),
            )
        )
        if progress:
            progress(n + 1, len(indices))
    return grids


def inner_accuracy(params: ModelParams, dataset: Dataset, indices=None) -> float:
    """Plain (non-occluded) accuracy of the inner classifier."""
    if indices is None:
        images, labels = dataset.images, dataset.labels
    else:
        images, labels = dataset.images[indices], dataset.labels[indices]
    probs = forward_batch(params, images)
    return float((probs.argmax(axis=-1) == labels).mean())


def evaluate_grids(
    grids: list[PredictionGrid],
    taus,
    mode: str = "soft",
    inner_acc: float | None = None,
) -> EvalReport:
    """Tabulate the defense over precomputed grids, one row per tau.

    Abstain verdicts count against clean accuracy and never count as
    certified; malicious verdicts on these benign inputs are the false
    positives reported as detection_rate.
    """
    labels = [g.true_label for g in grids]
    if any(lbl is None for lbl in labels):
        raise ValueError("grids must carry true labels for evaluation")
    rows = []
    per_image: dict[float, dict[str, list]] = {}
    tau_list = list(taus) if mode == "soft" else [None]
    for tau in tau_list:
        flags = {
            "image_id": [g.image_id for g in grids],
            "clean_correct": [],
            "certified": [],
            "certified_positionwise": [],
            "verdict": [],
        }
        for g, label in zip(grids, labels):
            res = certify_grid(g, tau=tau, mode=mode, true_label=label)
            flags["clean_correct"].append(res.clean_outcome.is_benign(int(label)))
            flags["certified"].append(res.certified_accurate)
            flags["certified_positionwise"].append(
                bool(res.positionwise_safe and res.clean_outcome.is_benign(int(label)))
            )
            flags["verdict"].append(res.clean_outcome.verdict)
        n = len(grids)
        verdicts = flags["verdict"]
        key = float(tau) if tau is not None else None
        row = {
            "tau": tau,
            "images": n,
            "clean_accuracy": sum(flags["clean_correct"]) / n,
            "certified_accuracy": sum(flags["certified"]) / n,
            "certified_accuracy_positionwise": sum(flags["certified_positionwise"]) / n,
            "abstain_rate": verdicts.count(ABSTAINED) / n,
            "detection_rate": verdicts.count(MALICIOUS) / n,
            "inner_accuracy": inner_acc,
        }
        rows.append(row)
        per_image[key] = flags
    return EvalReport(rows, per_image)


def evaluate_defense(
    params: ModelParams,
    val_set: Dataset,
    config: DefenseConfig,
    taus,
    count: int = 200,
    seed: int = 0,
    progress=None,
) -> EvalReport:
    """Full pipeline on a seeded validation subset, sweeping tau."""
    indices = eval_indices(len(val_set), count, seed)
    grids = build_grids(params, val_set, indices, config, progress=progress)
    acc = inner_accuracy(params, val_set, indices)
    return evaluate_grids(grids, taus, mode=config.vote_mode, inner_acc=acc)


def ablation_occlusion_training(
    params_occluded: ModelParams,
    params_plain: ModelParams,
    val_set: Dataset,
    config: DefenseConfig,
    taus,
    count: int = 200,
    seed: int = 0,
) -> dict:
    """Compare models trained with and without occlusion augmentation:
    non-occluded inner accuracy plus defended clean/certified accuracy."""
    indices = eval_indices(len(val_set), count, seed)
    out = {}
    for name, params in (("occluded", params_occluded), ("plain", params_plain)):
        grids = build_grids(params, val_set, indices, config)
        acc = inner_accuracy(params, val_set, indices)
        report = evaluate_grids(grids, taus, mode=config.vote_mode, inner_acc=acc)
        out[name] = report
    occ = out["occluded"].rows[0]["inner_accuracy"]
    plain = out["plain"].rows[0]["inner_accuracy"]
    out["inner_accuracy_delta"] = occ - plain
    return out


def multi_trial(trial_fn, seeds) -> dict:
    """Run trial_fn(seed) per seed; report mean and sample stddev per metric.

    trial_fn returns a flat dict of metric name to float.  A single trial
    reports stddev 0 by convention.
    """
    seeds = list(seeds)
    if not seeds:
        raise ValueError("need at least one trial seed")
    trials = [trial_fn(seed) for seed in seeds]
    metrics = {}
    for key in trials[0]:
        values = np.asarray([t[key] for t in trials], dtype=np.float64)
        std = float(values.std(ddof=1)) if len(values) > 1 else 0.0
        metrics[key] = {"mean": float(values.mean()), "std": std}
    return {"trials": trials, "aggregate": metrics, "seeds": seeds}
