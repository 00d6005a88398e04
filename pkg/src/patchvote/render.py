"""Static figures: Hinton-style prediction grids and vote grids as SVG or PPM.

Output is deterministic text/bytes with no external assets, so figures can be
golden-tested byte for byte.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .gridgen import PredictionGrid
from .occlusion import covering_grid
from .vote import ABSTAIN, VoteGrid

# 10 visually distinct class colors
PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
)
ABSTAIN_COLOR = "#d9d9d9"
GRID_LINE = "#cccccc"
HATCH_COLOR = "#00a000"


@dataclass(frozen=True)
class RenderSpec:
    cell: int = 16
    palette: tuple[str, ...] = PALETTE
    abstain_color: str = ABSTAIN_COLOR
    highlight: tuple[int, int] | None = None  # patch top-left to hatch
    legend: bool = True

    def color(self, cls: int) -> str:
        if cls >= len(self.palette):
            raise ValueError(f"palette has {len(self.palette)} colors, class {cls} needs more")
        return self.palette[cls]


def _hex_rgb(color: str) -> tuple[int, int, int]:
    color = color.lstrip("#")
    return int(color[0:2], 16), int(color[2:4], 16), int(color[4:6], 16)


def _svg_open(width: float, height: float) -> list[str]:
    return [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{width:.0f}" height="{height:.0f}" '
        f'viewBox="0 0 {width:.0f} {height:.0f}">',
        f'<rect x="0" y="0" width="{width:.0f}" height="{height:.0f}" fill="#ffffff"/>',
    ]


def _legend_lines(counts: Counter, spec: RenderSpec, y: float, width: float) -> list[str]:
    parts = []
    x = 4.0
    size = spec.cell * 0.6
    for cls in sorted(counts):
        parts.append(
            f'<rect x="{x:.2f}" y="{y:.2f}" width="{size:.2f}" height="{size:.2f}" '
            f'fill="{spec.color(cls)}"/>'
        )
        parts.append(
            f'<text x="{x + size + 3:.2f}" y="{y + size - 1:.2f}" '
            f'font-family="monospace" font-size="{size:.2f}">{cls}:{counts[cls]}</text>'
        )
        x += size + 10 + 8 * len(f"{cls}:{counts[cls]}")
        if x > width - 2 * size:
            break
    return parts


def _hatch(x: float, y: float, cell: float) -> str:
    # two diagonal strokes per cell
    return (
        f'<path d="M {x:.2f} {y + cell:.2f} L {x + cell:.2f} {y:.2f} '
        f'M {x:.2f} {y + cell / 2:.2f} L {x + cell / 2:.2f} {y:.2f}" '
        f'stroke="{HATCH_COLOR}" stroke-width="1.5" fill="none"/>'
    )


def render_prediction_grid(grid: PredictionGrid, spec: RenderSpec = RenderSpec()) -> str:
    """Hinton diagram: per cell, a square colored by the winning class whose
    area scales with its confidence; optional hatching marks windows that
    fully contain the highlighted patch position."""
    gh, gw = grid.shape
    cell = float(spec.cell)
    legend_h = cell * 1.5 if spec.legend else 0.0
    width, height = gw * cell, gh * cell + legend_h
    arg = grid.argmax_grid()
    conf = np.take_along_axis(grid.scores, arg[..., None], axis=-1)[..., 0]

    out = _svg_open(width, height)
    for i in range(gh):
        for j in range(gw):
            x, y = j * cell, i * cell
            out.append(
                f'<rect x="{x:.2f}" y="{y:.2f}" width="{cell:.2f}" height="{cell:.2f}" '
                f'fill="none" stroke="{GRID_LINE}" stroke-width="0.5"/>'
            )
            side = cell * float(np.sqrt(conf[i, j]))  # area tracks confidence
            off = (cell - side) / 2.0
            out.append(
                f'<rect x="{x + off:.2f}" y="{y + off:.2f}" '
                f'width="{side:.2f}" height="{side:.2f}" '
                f'fill="{spec.color(int(arg[i, j]))}"/>'
            )
    if spec.highlight is not None:
        cover = covering_grid(spec.highlight, grid.config, grid.image_hw)
        for i, j in np.argwhere(cover):
            out.append(_hatch(j * cell, i * cell, cell))
    if spec.legend:
        counts = Counter(int(v) for v in arg.ravel())
        out.extend(_legend_lines(counts, spec, gh * cell + cell * 0.3, width))
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_vote_grid(vote_grid: VoteGrid, spec: RenderSpec = RenderSpec()) -> str:
    """Solid cells for votes, neutral cells for abstentions."""
    gh, gw = vote_grid.shape
    cell = float(spec.cell)
    out = _svg_open(gw * cell, gh * cell)
    for i in range(gh):
        for j in range(gw):
            v = int(vote_grid.votes[i, j])
            color = spec.abstain_color if v == ABSTAIN else spec.color(v)
            out.append(
                f'<rect x="{j * cell:.2f}" y="{i * cell:.2f}" '
                f'width="{cell:.2f}" height="{cell:.2f}" '
                f'fill="{color}" stroke="{GRID_LINE}" stroke-width="0.5"/>'
            )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _ppm(pixels: np.ndarray) -> bytes:
    h, w, _ = pixels.shape
    return b"P6\n%d %d\n255\n" % (w, h) + pixels.astype(np.uint8).tobytes()


def prediction_grid_ppm(grid: PredictionGrid, spec: RenderSpec = RenderSpec()) -> bytes:
    """Raster version of the Hinton diagram (no legend)."""
    gh, gw = grid.shape
    cell = spec.cell
    arg = grid.argmax_grid()
    conf = np.take_along_axis(grid.scores, arg[..., None], axis=-1)[..., 0]
    canvas = np.full((gh * cell, gw * cell, 3), 255, dtype=np.uint8)
    for i in range(gh):
        for j in range(gw):
            side = int(round(cell * float(np.sqrt(conf[i, j]))))
            if side == 0:
                continue
            off = (cell - side) // 2
            y, x = i * cell + off, j * cell + off
            canvas[y:y + side, x:x + side] = _hex_rgb(spec.color(int(arg[i, j])))
    return _ppm(canvas)


def vote_grid_ppm(vote_grid: VoteGrid, spec: RenderSpec = RenderSpec()) -> bytes:
    gh, gw = vote_grid.shape
    cell = spec.cell
    canvas = np.empty((gh * cell, gw * cell, 3), dtype=np.uint8)
    for i in range(gh):
        for j in range(gw):
            v = int(vote_grid.votes[i, j])
            color = spec.abstain_color if v == ABSTAIN else spec.color(v)
            canvas[i * cell:(i + 1) * cell, j * cell:(j + 1) * cell] = _hex_rgb(color)
    return _ppm(canvas)
