"""Region voting: reduce a prediction grid to votes and a final verdict."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

ABSTAIN = -1
WINDOW = 3  # votes pool 3x3 blocks of grid cells

BENIGN = "benign"
MALICIOUS = "malicious"
ABSTAINED = "abstain"


@dataclass
class VoteGrid:
    """Per-region votes: class index, or ABSTAIN (-1) where the region fails
    unanimity (hard) or the threshold (soft)."""

    votes: np.ndarray  # [Gh-2, Gw-2] int
    classes: int
    mode: str
    tau: float | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.votes.shape


@dataclass
class DefenseOutcome:
    """Final decision: benign with a label, malicious, or abstain."""

    verdict: str
    label: int | None
    census: dict[int, int]

    def is_benign(self, label: int | None = None) -> bool:
        if self.verdict != BENIGN:
            return False
        return label is None or self.label == label


def trimmed_mean(values) -> float:
    """Mean of 9 scores after dropping one occurrence of the minimum."""
    values = np.asarray(values, dtype=np.float64)
    if values.shape != (WINDOW * WINDOW,):
        raise ValueError(f"expected exactly {WINDOW * WINDOW} values, got shape {values.shape}")
    return float((values.sum() - values.min()) / (WINDOW * WINDOW - 1))


def _scores_of(grid) -> np.ndarray:
    return grid if isinstance(grid, np.ndarray) else grid.scores


def _check_extent(scores: np.ndarray) -> None:
    if scores.ndim != 3:
        raise ValueError(f"expected [Gh, Gw, K] scores, got shape {scores.shape}")
    if scores.shape[0] < WINDOW or scores.shape[1] < WINDOW:
        raise ValueError(f"grid too small: {scores.shape[:2]} (need at least {WINDOW}x{WINDOW})")


def hard_vote(grid) -> VoteGrid:
    """A region votes c only when all 9 of its cells argmax to c."""
    scores = _scores_of(grid)
    _check_extent(scores)
    arg = scores.argmax(axis=-1)
    win = sliding_window_view(arg, (WINDOW, WINDOW))
    first = win[:, :, :1, :1]
    unanimous = (win == first).all(axis=(-2, -1))
    votes = np.where(unanimous, first[:, :, 0, 0], ABSTAIN)
    return VoteGrid(votes.astype(np.int64), scores.shape[2], "hard")


def window_trimmed_means(scores: np.ndarray) -> np.ndarray:
    """Per-region per-class trimmed means, [Gh-2, Gw-2, K] in float64."""
    win = sliding_window_view(scores, (WINDOW, WINDOW), axis=(0, 1)).astype(np.float64)
    total = win.sum(axis=(-2, -1))
    lowest = win.min(axis=(-2, -1))
    return (total - lowest) / (WINDOW * WINDOW - 1)


def soft_vote(grid, tau: float) -> VoteGrid:
    """A region votes for the class with the largest trimmed-mean confidence
    at or above tau; exact ties and empty passing sets abstain."""
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"tau must be in (0, 1], got {tau}")
    scores = _scores_of(grid)
    _check_extent(scores)
    tm = window_trimmed_means(scores)
    best = tm.max(axis=-1)
    winner = tm.argmax(axis=-1)
    unique = (tm == best[..., None]).sum(axis=-1) == 1
    votes = np.where((best >= tau) & unique, winner, ABSTAIN)
    return VoteGrid(votes.astype(np.int64), scores.shape[2], "soft", tau)


def vote(grid, mode: str | None = None, tau: float | None = None) -> VoteGrid:
    """Dispatch to hard or soft voting, defaulting to the grid's own config."""
    cfg = getattr(grid, "config", None)
    mode = mode if mode is not None else (cfg.vote_mode if cfg else "hard")
    if mode == "hard":
        return hard_vote(grid)
    if mode == "soft":
        return soft_vote(grid, tau if tau is not None else (cfg.tau if cfg else 0.9))
    raise ValueError(f"unknown vote mode {mode!r}")


def decide(vote_grid: VoteGrid) -> DefenseOutcome:
    """Zero voted classes: abstain.  One: benign with that class.  More:
    malicious (two regions confidently disagree, which a benign image should
    not produce)."""
    voted = vote_grid.votes[vote_grid.votes != ABSTAIN]
    census = dict(sorted(Counter(int(v) for v in voted).items()))
    distinct = list(census)
    if not distinct:
        return DefenseOutcome(ABSTAINED, None, census)
    if len(distinct) == 1:
        return DefenseOutcome(BENIGN, distinct[0], census)
    return DefenseOutcome(MALICIOUS, None, census)
