"""Procedural glyph renderer: strokes on a grid of 16-pixel cells."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .alphabet import DEFAULT_ALPHABET, N_KINDS, StrokeAlphabet, check_kind, encode

CELL = 16
MARGIN = 3.0
RESOLUTIONS = (32, 64, 128)


class RenderError(ValueError):
    pass


@dataclass(frozen=True)
class FontStyle:
    name: str
    thickness: float
    slant: float = 0.0
    rounding: float = 0.0
    jitter: float = 0.0
    jitter_seed: int = 0

    def to_dict(self) -> dict:
        return {"name": self.name, "thickness": self.thickness, "slant": self.slant,
                "rounding": self.rounding, "jitter": self.jitter, "jitter_seed": self.jitter_seed}

    @classmethod
    def from_dict(cls, d: dict) -> "FontStyle":
        return cls(**d)


# source and target "fonts": thin upright vs. heavy slanted with rounded corners
FONT_A = FontStyle("regular", thickness=1.4)
FONT_B = FontStyle("bold", thickness=2.6, slant=0.12, rounding=0.25)


@dataclass(frozen=True, order=True)
class Placement:
    """One stroke of ``kind`` occupying grid cell (row, col)."""

    row: int
    col: int
    kind: int

    def __post_init__(self):
        check_kind(self.kind)


@dataclass(frozen=True)
class SyntheticGlyph:
    placements: tuple[Placement, ...]
    font_style: FontStyle
    image: np.ndarray = field(repr=False, compare=False)

    @property
    def kinds(self) -> frozenset[int]:
        return frozenset(p.kind for p in self.placements)

    @property
    def code(self) -> np.ndarray:
        return encode(p.kind for p in self.placements)


def grid_size(resolution: int) -> int:
    if resolution not in RESOLUTIONS:
        raise RenderError(f"resolution must be one of {RESOLUTIONS}, got {resolution}")
    return resolution // CELL


def _styled_points(poly: np.ndarray, style: FontStyle) -> np.ndarray:
    pts = poly
    if style.rounding > 0 and len(pts) > 2:
        # cut each interior corner back along both adjacent segments
        cut = [pts[0]]
        for a, b, c in zip(pts[:-2], pts[1:-1], pts[2:]):
            cut += [b + (a - b) * style.rounding, b + (c - b) * style.rounding]
        cut.append(pts[-1])
        pts = np.array(cut)
    box = CELL - 2 * MARGIN
    x = MARGIN + pts[:, 0] * box + style.slant * (0.5 - pts[:, 1]) * box
    y = MARGIN + pts[:, 1] * box
    return np.stack([x, y], axis=1)


def stroke_coverage(kind: int, style: FontStyle, alphabet: StrokeAlphabet = DEFAULT_ALPHABET,
                    offset: tuple[float, float] = (0.0, 0.0)) -> np.ndarray:
    """Anti-aliased ink coverage in [0, 1] of one stroke inside a single cell."""
    pts = _styled_points(alphabet.polyline(kind), style) + np.asarray(offset)
    half = style.thickness / 2
    if pts.min() - half < -1e-9 or pts.max() + half > CELL + 1e-9:
        raise RenderError(f"stroke {kind} escapes its cell under style {style.name!r}")
    yy, xx = np.mgrid[0:CELL, 0:CELL] + 0.5
    dist = np.full((CELL, CELL), np.inf)
    for (ax, ay), (bx, by) in zip(pts[:-1], pts[1:]):
        vx, vy = bx - ax, by - ay
        u = np.clip(((xx - ax) * vx + (yy - ay) * vy) / (vx * vx + vy * vy), 0.0, 1.0)
        dist = np.minimum(dist, np.hypot(xx - ax - u * vx, yy - ay - u * vy))
    return np.clip(half - dist + 0.5, 0.0, 1.0)


def quantize(image: np.ndarray) -> np.ndarray:
    """Snap [-1, 1] values onto the 256 levels a grayscale PNG can hold."""
    return to_uint8(image).astype(np.float64) / 255.0 * 2.0 - 1.0


def to_uint8(image: np.ndarray) -> np.ndarray:
    return np.round((np.clip(image, -1.0, 1.0) + 1.0) / 2.0 * 255.0).astype(np.uint8)


def validate_placements(placements, resolution: int) -> tuple[Placement, ...]:
    g = grid_size(resolution)
    placements = tuple(sorted(placements))
    if not 1 <= len(placements) <= 12:
        raise RenderError(f"a glyph needs 1..12 strokes, got {len(placements)}")
    cells = set()
    for p in placements:
        if not (0 <= p.row < g and 0 <= p.col < g):
            raise RenderError(f"placement {p} outside the {g}x{g} grid")
        if (p.row, p.col) in cells:
            raise RenderError(f"two strokes share cell ({p.row}, {p.col})")
        cells.add((p.row, p.col))
    return placements


def _rasterize(placements, font_style: FontStyle, resolution: int, alphabet: StrokeAlphabet) -> np.ndarray:
    ink = np.zeros((resolution, resolution))
    rng = np.random.default_rng(font_style.jitter_seed) if font_style.jitter else None
    for p in placements:
        offset = (0.0, 0.0)
        if rng is not None:
            offset = tuple(rng.uniform(-font_style.jitter, font_style.jitter, 2))
        cov = stroke_coverage(p.kind, font_style, alphabet, offset)
        r0, c0 = p.row * CELL, p.col * CELL
        region = ink[r0:r0 + CELL, c0:c0 + CELL]
        np.maximum(region, cov, out=region)
    gray = quantize(1.0 - 2.0 * ink)
    return np.repeat(gray[:, :, None], 3, axis=2)


def render_glyph(placements, font_style: FontStyle, resolution: int = 32,
                 alphabet: StrokeAlphabet = DEFAULT_ALPHABET) -> SyntheticGlyph:
    """Render ink (-1) on paper (+1), replicated to three channels."""
    placements = validate_placements(placements, resolution)
    return SyntheticGlyph(placements, font_style, _rasterize(placements, font_style, resolution, alphabet))


def alphabet_sheet(font_style: FontStyle, resolution: int = 128,
                   alphabet: StrokeAlphabet = DEFAULT_ALPHABET) -> tuple[tuple[Placement, ...], np.ndarray]:
    """All 32 kinds on one canvas, one per cell in row-major order.

    A specimen sheet, not a glyph: it exceeds the per-glyph stroke limit.
    """
    g = grid_size(resolution)
    if g * g < N_KINDS:
        raise RenderError(f"a {resolution}px canvas has {g * g} cells, fewer than {N_KINDS}")
    placements = tuple(Placement(i // g, i % g, i + 1) for i in range(N_KINDS))
    return placements, _rasterize(placements, font_style, resolution, alphabet)
