"""Occlusion geometry: sizing, positions, masks, containment."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from patchvote.occlusion import (
    DefenseConfig,
    apply_mask,
    covering_grid,
    covers,
    make_mask,
    occlusion_positions,
    occlusion_size,
    patch_positions,
    position_axes,
    random_occlusion,
)


def test_occlusion_size_values():
    assert occlusion_size(5, 1) == 7
    assert occlusion_size(10, 2) == 16
    assert occlusion_size(1, 1) == 3
    assert occlusion_size(5, 3) == 14


def test_occlusion_size_rejects_bad_args():
    with pytest.raises(ValueError):
        occlusion_size(0, 1)
    with pytest.raises(ValueError):
        occlusion_size(5, 0)


def test_config_validation():
    with pytest.raises(ValueError):
        DefenseConfig(tau=0.0)
    with pytest.raises(ValueError):
        DefenseConfig(tau=1.5)
    with pytest.raises(ValueError):
        DefenseConfig(border="edge")
    with pytest.raises(ValueError):
        DefenseConfig(vote_mode="fuzzy")
    cfg = DefenseConfig(patch_size=5, stride=2)
    assert (cfg.qh, cfg.qw) == (11, 11)


def test_rectangular_config_sides():
    cfg = DefenseConfig(patch_size=5, patch_height=3, patch_width=6)
    assert (cfg.ph, cfg.pw) == (3, 6)
    assert (cfg.qh, cfg.qw) == (5, 8)
    assert not cfg.square


def test_positions_interior_28():
    cfg = DefenseConfig(patch_size=5, border="interior")
    positions = occlusion_positions((28, 28), cfg)
    assert len(positions) == 22 * 22
    assert positions[0] == (0, 0) and positions[-1] == (21, 21)


def test_positions_padded_28():
    cfg = DefenseConfig(patch_size=5, border="padded")
    rows, cols = position_axes((28, 28), cfg)
    assert rows == list(range(-2, 24)) and cols == list(range(-2, 24))
    assert len(rows) == 26


def test_positions_single_when_window_fills_image():
    cfg = DefenseConfig(patch_size=5, border="interior")
    assert occlusion_positions((7, 7), cfg) == [(0, 0)]


def test_positions_window_too_large():
    cfg = DefenseConfig(patch_size=5, border="interior")
    with pytest.raises(ValueError, match="exceeds"):
        occlusion_positions((6, 6), cfg)


def test_make_mask_corner():
    cfg = DefenseConfig(patch_size=5)
    mask = make_mask((0, 0), cfg, (28, 28))
    assert mask.shape == (28, 28)
    assert set(np.unique(mask)) <= {0.0, 1.0}
    assert (mask == 0).sum() == 49
    assert mask[:7, :7].sum() == 0 and mask[7:, :].all()


def test_make_mask_clipped_offgrid():
    cfg = DefenseConfig(patch_size=5, border="padded")
    mask = make_mask((-2, -2), cfg, (28, 28))
    assert (mask == 0).sum() == 25  # 5x5 overlap with the image
    assert mask[:5, :5].sum() == 0


def test_make_mask_bottom_right():
    cfg = DefenseConfig(patch_size=5)
    mask = make_mask((21, 21), cfg, (28, 28))
    assert (mask == 0).sum() == 49
    assert mask[21:, 21:].sum() == 0


def test_apply_mask_identity_and_annihilation():
    rng = np.random.default_rng(0)
    img = rng.random((8, 8, 1)).astype(np.float32)
    ones = np.ones((8, 8), dtype=np.float32)
    np.testing.assert_array_equal(apply_mask(img, ones), img)
    assert apply_mask(img, np.zeros((8, 8), np.float32)).sum() == 0


def test_apply_mask_elementwise_product():
    img = np.indices((4, 4)).sum(0).astype(np.float32)[..., None]
    mask = np.ones((4, 4), np.float32)
    mask[:2, :2] = 0
    out = apply_mask(img, mask)
    np.testing.assert_array_equal(out[..., 0], img[..., 0] * mask)


def test_apply_mask_shape_mismatch():
    with pytest.raises(ValueError, match="shape mismatch"):
        apply_mask(np.zeros((4, 4, 1)), np.zeros((5, 5)))


@settings(deadline=None, max_examples=25)
@given(seed=st.integers(0, 10_000))
def test_apply_mask_idempotent(seed):
    rng = np.random.default_rng(seed)
    img = rng.random((6, 6, 1)).astype(np.float32)
    mask = (rng.random((6, 6)) > 0.5).astype(np.float32)
    once = apply_mask(img, mask)
    np.testing.assert_array_equal(apply_mask(once, mask), once)


def test_random_occlusion_deterministic():
    cfg = DefenseConfig(patch_size=5)
    img = np.random.default_rng(0).random((28, 28, 1)).astype(np.float32)
    o1, m1 = random_occlusion(img, cfg, np.random.default_rng(9))
    o2, m2 = random_occlusion(img, cfg, np.random.default_rng(9))
    assert np.array_equal(o1, o2) and np.array_equal(m1, m2)


def test_random_occlusion_covers_all_positions():
    cfg = DefenseConfig(patch_size=5, border="interior")
    img = np.zeros((28, 28, 1), dtype=np.float32)
    rng = np.random.default_rng(0)
    positions = occlusion_positions((28, 28), cfg)
    seen = set()
    for _ in range(10_000):
        _, mask = random_occlusion(img, cfg, rng)
        zeros = np.argwhere(mask == 0)
        seen.add((int(zeros[:, 0].min()), int(zeros[:, 1].min())))
    assert seen == set(positions)  # all 484 positions observed


def test_random_occlusion_full_window():
    cfg = DefenseConfig(patch_size=5, border="interior")
    img = np.ones((7, 7, 1), dtype=np.float32)
    occluded, mask = random_occlusion(img, cfg, np.random.default_rng(0))
    assert mask.sum() == 0 and occluded.sum() == 0


def test_padded_containment_always_nine():
    # every patch placement has exactly a 3x3 block of fully-covering windows
    cfg = DefenseConfig(patch_size=5, border="padded")
    positions = occlusion_positions((28, 28), cfg)
    for r, c in patch_positions((28, 28), cfg):
        n = sum(covers(pos, (r, c), cfg) for pos in positions)
        assert n == 9, f"patch at {(r, c)} covered by {n} windows"


def test_interior_containment_nine_only_inside():
    cfg = DefenseConfig(patch_size=5, border="interior")
    positions = occlusion_positions((28, 28), cfg)
    for r, c in patch_positions((28, 28), cfg):
        n = sum(covers(pos, (r, c), cfg) for pos in positions)
        if 2 <= r <= 21 and 2 <= c <= 21:
            assert n == 9
        else:
            assert n < 9
    assert sum(covers(pos, (0, 0), cfg) for pos in positions) == 1


def test_covering_grid_matches_covers():
    cfg = DefenseConfig(patch_size=5, border="padded")
    rows, cols = position_axes((28, 28), cfg)
    grid = covering_grid((10, 3), cfg, (28, 28))
    for i, a in enumerate(rows):
        for j, b in enumerate(cols):
            assert grid[i, j] == covers((a, b), (10, 3), cfg)
