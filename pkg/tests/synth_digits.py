"""Deterministic synthetic digit corpus in MNIST's IDX container format.

Stands in for the real digit files when none are provided (this sandbox has
no network beyond package mirrors).  Digits are stroke skeletons rendered
through a distance field with per-sample affine jitter and noise, written as
28x28 grayscale IDX files that the package loader reads like the real thing.

Usage as a script:  python tests/synth_digits.py --out data/mnist --count 12000
"""

from __future__ import annotations

import argparse
import struct
from pathlib import Path

import numpy as np

SIZE = 28
MARGIN = 3.0
BOX = SIZE - 2 * MARGIN


def _arc(cx, cy, rx, ry, a0, a1, n=32):
    t = np.linspace(np.radians(a0), np.radians(a1), n)
    return np.stack([cx + rx * np.cos(t), cy - ry * np.sin(t)], axis=1)


def _line(*pts):
    return np.asarray(pts, dtype=np.float64)


# unit-box stroke skeletons, x right, y down
STROKES = {
    0: [_arc(0.50, 0.50, 0.30, 0.42, 90, 450)],
    1: [_line((0.32, 0.30), (0.54, 0.10), (0.54, 0.90))],
    2: [np.vstack([_arc(0.50, 0.30, 0.28, 0.22, 170, -20),
                   _line((0.22, 0.88), (0.80, 0.88))])],
    3: [_arc(0.45, 0.28, 0.28, 0.20, 160, -70),
        _arc(0.45, 0.72, 0.30, 0.22, 70, -160)],
    4: [_line((0.58, 0.08), (0.20, 0.62), (0.85, 0.62)),
        _line((0.66, 0.40), (0.66, 0.92))],
    5: [_line((0.78, 0.10), (0.26, 0.10), (0.24, 0.48)),
        _arc(0.47, 0.68, 0.28, 0.24, 140, -160)],
    6: [_arc(0.72, 0.46, 0.42, 0.40, 95, 185),
        _arc(0.50, 0.70, 0.24, 0.20, 0, 360)],
    7: [_line((0.20, 0.10), (0.80, 0.10), (0.40, 0.92))],
    8: [_arc(0.50, 0.30, 0.22, 0.19, 0, 360),
        _arc(0.50, 0.72, 0.26, 0.21, 0, 360)],
    9: [_arc(0.50, 0.32, 0.24, 0.20, 0, 360),
        _line((0.735, 0.32), (0.68, 0.90))],
}

_PIXELS = np.stack(
    np.meshgrid(np.arange(SIZE), np.arange(SIZE), indexing="ij"), axis=-1
).reshape(-1, 2).astype(np.float64)  # (row, col)


def _sample_polyline(pts: np.ndarray, spacing: float = 0.35) -> np.ndarray:
    out = [pts[:1]]
    for a, b in zip(pts[:-1], pts[1:]):
        n = max(int(np.ceil(np.hypot(*(b - a)) / spacing)), 1)
        out.append(a + (b - a) * np.linspace(0, 1, n + 1)[1:, None])
    return np.vstack(out)


def digit_image(digit: int, rng: np.random.Generator) -> np.ndarray:
    """One 28x28 float image in [0, 1] with random affine jitter, stroke-width
    variation, and noise.  Jitter magnitudes are tuned so a small CNN lands in
    the high 90s after a few epochs rather than saturating instantly."""
    angle = rng.uniform(-0.25, 0.25)
    scale = rng.uniform(0.75, 1.2, size=2)
    shear = rng.uniform(-0.2, 0.2)
    shift = rng.uniform(-2.5, 2.5, size=2)
    cos, sin = np.cos(angle), np.sin(angle)
    lin = np.array([[cos, -sin], [sin, cos]]) @ np.array([[scale[0], shear], [0.0, scale[1]]])

    samples = []
    for poly in STROKES[digit]:
        px = MARGIN + poly * BOX  # unit box -> pixel coords (x, y)
        centered = px - SIZE / 2.0
        moved = centered @ lin.T + SIZE / 2.0 + shift
        samples.append(_sample_polyline(moved))
    pts = np.vstack(samples)[:, ::-1]  # to (row, col)

    d2 = ((_PIXELS[:, None, :] - pts[None, :, :]) ** 2).sum(-1).min(axis=1)
    dist = np.sqrt(d2).reshape(SIZE, SIZE)
    img = np.clip((rng.uniform(1.0, 1.5) - dist) / 0.8, 0.0, 1.0)
    img *= rng.uniform(0.6, 1.0)
    img += rng.normal(0.0, 0.12, img.shape)
    return np.clip(img, 0.0, 1.0)


def make_corpus(count: int, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """uint8 images [N, 28, 28] and labels [N], classes balanced round-robin."""
    rng = np.random.default_rng(seed)
    images = np.empty((count, SIZE, SIZE), dtype=np.uint8)
    labels = np.arange(count) % 10
    for i in range(count):
        images[i] = np.round(digit_image(int(labels[i]), rng) * 255).astype(np.uint8)
    return images, labels.astype(np.uint8)


def write_idx(out_dir, count: int, seed: int = 0) -> tuple[Path, Path]:
    """Write train-images/train-labels IDX files; independent of the package's
    own IDX writer on purpose."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    images, labels = make_corpus(count, seed)
    images_path = out_dir / "train-images-idx3-ubyte"
    labels_path = out_dir / "train-labels-idx1-ubyte"
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, count, SIZE, SIZE))
        f.write(images.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, count))
        f.write(labels.tobytes())
    return images_path, labels_path


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", required=True)
    ap.add_argument("--count", type=int, default=12000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    images_path, labels_path = write_idx(args.out, args.count, args.seed)
    print(f"wrote {args.count} images to {images_path} / {labels_path}")


if __name__ == "__main__":
    main()
