"""Occlusion geometry: window sizing, positions, masks, and random occlusion."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

BORDER_POLICIES = ("interior", "padded")
VOTE_MODES = ("hard", "soft")


def occlusion_size(patch: int, stride: int = 1) -> int:
    """Side of the occlusion window for a given patch side and stride.

    patch + 2 at stride 1, patch + 3*stride otherwise.  Sized so that every
    patch placement is fully covered by a 3x3 block of window positions even
    when the patch is not aligned to the stride grid.
    """
    if patch < 1:
        raise ValueError(f"patch size must be >= 1, got {patch}")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    return patch + 2 if stride == 1 else patch + 3 * stride


@dataclass(frozen=True)
class DefenseConfig:
    """Hyper-parameters of the occlusion-voting defense.

    The occlusion window side is always derived from the patch side via
    occlusion_size(); it is not an independent knob.  `border` selects whether
    windows must lie inside the image ("interior") or may hang off the edge
    ("padded", default).  The padded policy guarantees a full 3x3 block of
    fully-covering windows for every patch position, including at the border.
    """

    patch_size: int = 5
    stride: int = 1
    tau: float = 0.9
    border: str = "padded"
    vote_mode: str = "soft"
    # Rectangular patches: height/width override patch_size when given.
    patch_height: int | None = None
    patch_width: int | None = None

    def __post_init__(self) -> None:
        if self.patch_size < 1:
            raise ValueError(f"patch_size must be >= 1, got {self.patch_size}")
        if self.stride < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError(f"tau must be in (0, 1], got {self.tau}")
        if self.border not in BORDER_POLICIES:
            raise ValueError(f"border must be one of {BORDER_POLICIES}, got {self.border!r}")
        if self.vote_mode not in VOTE_MODES:
            raise ValueError(f"vote_mode must be one of {VOTE_MODES}, got {self.vote_mode!r}")
        for side in (self.patch_height, self.patch_width):
            if side is not None and side < 1:
                raise ValueError("rectangular patch sides must be >= 1")

    @property
    def ph(self) -> int:
        return self.patch_height if self.patch_height is not None else self.patch_size

    @property
    def pw(self) -> int:
        return self.patch_width if self.patch_width is not None else self.patch_size

    @property
    def qh(self) -> int:
        return occlusion_size(self.ph, self.stride)

    @property
    def qw(self) -> int:
        return occlusion_size(self.pw, self.stride)

    @property
    def square(self) -> bool:
        return self.ph == self.pw

    def to_dict(self) -> dict:
        return {
            "patch": self.patch_size if self.square else [self.ph, self.pw],
            "occlusion": self.qh if self.square else [self.qh, self.qw],
            "stride": self.stride,
            "tau": self.tau,
            "border": self.border,
            "vote_mode": self.vote_mode,
        }


def _axis_positions(size: int, patch: int, occ: int, stride: int, border: str) -> list[int]:
    if occ > size:
        raise ValueError(f"occlusion side {occ} exceeds image side {size}")
    if border == "interior":
        start, stop = 0, size - occ
    else:
        start, stop = patch - occ, size - patch
    return list(range(start, stop + 1, stride))


def position_axes(image_hw: tuple[int, int], config: DefenseConfig) -> tuple[list[int], list[int]]:
    """Row and column top-left coordinates of all occlusion windows."""
    h, w = image_hw
    rows = _axis_positions(h, config.ph, config.qh, config.stride, config.border)
    cols = _axis_positions(w, config.pw, config.qw, config.stride, config.border)
    return rows, cols


def occlusion_positions(image_hw: tuple[int, int], config: DefenseConfig) -> list[tuple[int, int]]:
    """All occlusion window top-left coordinates, row-major."""
    rows, cols = position_axes(image_hw, config)
    return [(a, b) for a in rows for b in cols]


def make_mask(pos: tuple[int, int], config: DefenseConfig, image_hw: tuple[int, int]) -> np.ndarray:
    """Binary [H, W] mask: 0 inside the occlusion window at `pos`, 1 elsewhere.

    Windows hanging off the image (padded policy) are clipped to the image.
    """
    h, w = image_hw
    a, b = pos
    mask = np.ones((h, w), dtype=np.float32)
    mask[max(a, 0):max(a + config.qh, 0), max(b, 0):max(b + config.qw, 0)] = 0.0
    return mask


def apply_mask(image: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Elementwise product: occluded pixels become 0, visible pixels unchanged."""
    if image.shape[:2] != mask.shape:
        raise ValueError(f"shape mismatch: image {image.shape} vs mask {mask.shape}")
    if image.ndim == 3:
        return image * mask[:, :, None]
    return image * mask


def random_occlusion(
    image: np.ndarray, config: DefenseConfig, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Occlude `image` at a position drawn uniformly from all window positions."""
    positions = occlusion_positions(image.shape[:2], config)
    pos = positions[int(rng.integers(len(positions)))]
    mask = make_mask(pos, config, image.shape[:2])
    return apply_mask(image, mask), mask


def covers(pos: tuple[int, int], patch_pos: tuple[int, int], config: DefenseConfig) -> bool:
    """True when the window at `pos` fully contains the patch at `patch_pos`."""
    a, b = pos
    r, c = patch_pos
    return (
        a <= r
        and a + config.qh >= r + config.ph
        and b <= c
        and b + config.qw >= c + config.pw
    )


def covering_grid(
    patch_pos: tuple[int, int], config: DefenseConfig, image_hw: tuple[int, int]
) -> np.ndarray:
    """Boolean [Gh, Gw] over window positions: True where the window fully
    contains the patch rectangle at `patch_pos`."""
    rows, cols = position_axes(image_hw, config)
    r, c = patch_pos
    ra = np.asarray(rows)
    ca = np.asarray(cols)
    row_ok = (ra <= r) & (ra + config.qh >= r + config.ph)
    col_ok = (ca <= c) & (ca + config.qw >= c + config.pw)
    return row_ok[:, None] & col_ok[None, :]


def patch_positions(image_hw: tuple[int, int], config: DefenseConfig) -> list[tuple[int, int]]:
    """All pixel-aligned top-left placements of the adversarial patch."""
    h, w = image_hw
    return [(r, c) for r in range(h - config.ph + 1) for c in range(w - config.pw + 1)]
