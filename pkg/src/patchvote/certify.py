"""Worst-case certification: can any patch attack succeed undetected?

The worst-case adversary controls every prediction-grid cell whose occlusion
window does not fully contain the patch.  Cells whose windows fully contain it
are provably untouchable, so a vote region built only from untouchable cells
survives any attack at that patch position.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .gridgen import PredictionGrid, prediction_grid
from .occlusion import DefenseConfig, covering_grid, patch_positions
from .vote import (
    ABSTAIN,
    ABSTAINED,
    BENIGN,
    MALICIOUS,
    WINDOW,
    DefenseOutcome,
    VoteGrid,
    decide,
    vote,
)

RULES = ("unanimous", "positionwise")


@dataclass
class CertificationResult:
    certified_safe: bool
    certified_accurate: bool
    clean_outcome: DefenseOutcome
    rule: str
    unanimous_safe: bool
    positionwise_safe: bool
    position_safe: np.ndarray  # bool over patch top-left placements [Ph, Pw]
    unsafe_positions: list[tuple[int, int]]

    def to_json(self, image_id=None) -> dict:
        return {
            "image_id": image_id,
            "clean_verdict": self.clean_outcome.verdict,
            "clean_class": self.clean_outcome.label,
            "certified_safe": self.certified_safe,
            "certified_accurate": self.certified_accurate,
            "unsafe_positions_count": len(self.unsafe_positions),
        }


def unaffected_votes(
    patch_pos: tuple[int, int], config: DefenseConfig, image_hw: tuple[int, int]
) -> np.ndarray:
    """Boolean [Gh-2, Gw-2] over vote regions: True where all 9 underlying
    occlusion windows fully contain the patch at `patch_pos`."""
    cover = covering_grid(patch_pos, config, image_hw)
    win = sliding_window_view(cover, (WINDOW, WINDOW))
    return win.all(axis=(-2, -1))


def certify_unanimous(vote_grid: VoteGrid) -> bool:
    """True only when every region votes the same single class, with no
    abstentions; even one non-voting region forfeits the certificate."""
    votes = vote_grid.votes
    if votes.size == 0:
        return False
    first = votes.flat[0]
    return first != ABSTAIN and bool((votes == first).all())


def positionwise_map(
    vote_grid: VoteGrid,
    config: DefenseConfig,
    image_hw: tuple[int, int],
    clean_label: int | None,
) -> np.ndarray:
    """Per-patch-position safety: a position is safe when at least one vote
    region unaffected by a patch there votes the clean benign class."""
    h, w = image_hw
    ph_n = h - config.ph + 1
    pw_n = w - config.pw + 1
    safe = np.zeros((ph_n, pw_n), dtype=bool)
    if clean_label is None:
        return safe
    target_cells = vote_grid.votes == clean_label
    if not target_cells.any():
        return safe
    for r in range(ph_n):
        for c in range(pw_n):
            safe[r, c] = bool((unaffected_votes((r, c), config, image_hw) & target_cells).any())
    return safe


def certify_grid(
    grid: PredictionGrid,
    tau: float | None = None,
    mode: str | None = None,
    rule: str = "unanimous",
    true_label: int | None = None,
) -> CertificationResult:
    """Vote, decide, and certify one prediction grid under both rules."""
    if rule not in RULES:
        raise ValueError(f"rule must be one of {RULES}, got {rule!r}")
    vg = vote(grid, mode=mode, tau=tau)
    outcome = decide(vg)
    unanimous = certify_unanimous(vg)

    clean_label = outcome.label if outcome.verdict == BENIGN else None
    pos_safe = positionwise_map(vg, grid.config, grid.image_hw, clean_label)
    positionwise = bool(pos_safe.all())
    unsafe = [(int(r), int(c)) for r, c in np.argwhere(~pos_safe)]

    certified_safe = unanimous if rule == "unanimous" else positionwise
    label = true_label if true_label is not None else grid.true_label
    certified_accurate = bool(
        certified_safe and label is not None and outcome.is_benign(int(label))
    )
    return CertificationResult(
        certified_safe=certified_safe,
        certified_accurate=certified_accurate,
        clean_outcome=outcome,
        rule=rule,
        unanimous_safe=unanimous,
        positionwise_safe=positionwise,
        position_safe=pos_safe,
        unsafe_positions=unsafe,
    )


def _attacked_verdict_literal(
    scores: np.ndarray, cover: np.ndarray, target: int, mode: str, tau: float
) -> tuple[str, int | None]:
    """Overwrite every cell outside `cover` with one-hot `target`, re-vote."""
    attacked = scores.copy()
    attacked[~cover] = 0.0
    attacked[~cover, target] = 1.0
    outcome = decide(vote(attacked, mode=mode, tau=tau))
    return outcome.verdict, outcome.label


def _attacked_verdict(
    scores: np.ndarray, cover: np.ndarray, target: int, mode: str, tau: float
) -> tuple[str, int | None]:
    """Same result as _attacked_verdict_literal, computed on the small band of
    vote regions that can see a covered cell.

    Every region fully outside the covered block sees only one-hot target
    cells, so it votes `target` under either mode (trimmed mean 1.0, unanimous
    argmax); only regions intersecting the block need recomputation.
    """
    gh, gw, _ = scores.shape
    vh, vw = gh - WINDOW + 1, gw - WINDOW + 1
    covered = np.argwhere(cover)
    if len(covered) == 0:
        return BENIGN, target
    (r0, c0), (r1, c1) = covered.min(axis=0), covered.max(axis=0)
    wi0, wi1 = max(r0 - (WINDOW - 1), 0), min(r1, vh - 1)
    wj0, wj1 = max(c0 - (WINDOW - 1), 0), min(c1, vw - 1)
    sub = scores[wi0:wi1 + WINDOW, wj0:wj1 + WINDOW].copy()
    subcov = cover[wi0:wi1 + WINDOW, wj0:wj1 + WINDOW]
    sub[~subcov] = 0.0
    sub[~subcov, target] = 1.0
    vg = vote(sub, mode=mode, tau=tau)
    distinct = {int(v) for v in vg.votes.ravel() if v != ABSTAIN}
    if (wi1 - wi0 + 1) * (wj1 - wj0 + 1) < vh * vw:
        distinct.add(target)
    if not distinct:
        return ABSTAINED, None
    if len(distinct) == 1:
        return BENIGN, distinct.pop()
    return MALICIOUS, None


def adversary_oracle(
    grid: PredictionGrid, tau: float | None = None, mode: str | None = None
) -> list[dict]:
    """Exhaustive worst-case attack search against the voting defense.

    For every patch position and every non-clean target class, hand the
    adversary full control of all prediction cells whose window does not fully
    contain the patch (set them one-hot to the target), re-run voting, and
    record every undetected misclassification: a benign verdict for the
    target.  An empty result validates the certificate.
    """
    mode = mode if mode is not None else grid.config.vote_mode
    tau = tau if tau is not None else grid.config.tau
    clean_outcome = decide(vote(grid, mode=mode, tau=tau))
    clean_label = clean_outcome.label if clean_outcome.verdict == BENIGN else None
    k = grid.classes
    scores = grid.scores
    breaks = []
    for pos in patch_positions(grid.image_hw, grid.config):
        cover = covering_grid(pos, grid.config, grid.image_hw)
        for target in range(k):
            if clean_label is not None and target == clean_label:
                continue
            verdict, label = _attacked_verdict(scores, cover, target, mode, tau)
            if verdict == BENIGN and label == target:
                breaks.append({"position": pos, "target": target, "verdict": verdict})
    return breaks


def certified_accuracy_flags(
    image: np.ndarray,
    label: int,
    params,
    config: DefenseConfig,
    rule: str = "unanimous",
) -> CertificationResult:
    """Full pipeline for one image: prediction grid, vote, decide, certify."""
    grid = prediction_grid(params, image, config, true_label=int(label))
    return certify_grid(grid, rule=rule)


def write_certification_report(results, path, image_ids=None) -> None:
    """JSON lines, one object per image."""
    with open(path, "w", encoding="utf-8") as f:
        for i, res in enumerate(results):
            image_id = image_ids[i] if image_ids is not None else i
            f.write(json.dumps(res.to_json(image_id)) + "\n")
