"""Template-matching stroke detector used as the evaluation oracle."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .alphabet import DEFAULT_ALPHABET, N_KINDS, StrokeAlphabet
from .render import CELL, FontStyle, grid_size, stroke_coverage

THRESHOLD = 0.7


class DetectorError(RuntimeError):
    pass


def _normalize_rows(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x = x - x.mean(axis=1, keepdims=True)
    norm = np.linalg.norm(x, axis=1)
    return x / np.where(norm > 0, norm, 1.0)[:, None], norm


@dataclass
class StrokeDetector:
    """Per-cell normalized cross-correlation against the 32 stroke templates.

    Every grid cell is compared with each template at integer offsets within
    ``search`` pixels; the cell reports the best-scoring kind when that score
    reaches ``threshold``. Templates are rendered in ``font_style``.
    """

    font_style: FontStyle
    resolution: int = 32
    alphabet: StrokeAlphabet = DEFAULT_ALPHABET
    threshold: float = THRESHOLD
    search: int = 1
    calibrated: bool = False
    _templates: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.grid = grid_size(self.resolution)
        t = np.stack([stroke_coverage(k, self.font_style, self.alphabet).ravel() for k in range(1, N_KINDS + 1)])
        self._templates, _ = _normalize_rows(t)

    def ink(self, image: np.ndarray) -> np.ndarray:
        image = np.asarray(image, dtype=np.float64)
        if image.ndim == 3:
            image = image.mean(axis=2)
        if image.shape != (self.resolution, self.resolution):
            raise DetectorError(f"expected a {self.resolution}x{self.resolution} image, got {image.shape}")
        return (1.0 - np.clip(image, -1.0, 1.0)) / 2.0

    def cell_scores(self, image: np.ndarray) -> np.ndarray:
        """Best correlation per (row, col, kind), shape (g, g, 32)."""
        s = self.search
        ink = np.pad(self.ink(image), s)
        g = self.grid
        offsets = [(dy, dx) for dy in range(-s, s + 1) for dx in range(-s, s + 1)]
        patches = np.empty((g, g, len(offsets), CELL * CELL))
        for r in range(g):
            for c in range(g):
                for k, (dy, dx) in enumerate(offsets):
                    y0, x0 = r * CELL + s + dy, c * CELL + s + dx
                    patches[r, c, k] = ink[y0:y0 + CELL, x0:x0 + CELL].ravel()
        flat, norm = _normalize_rows(patches.reshape(-1, CELL * CELL))
        scores = flat @ self._templates.T
        # blank patches carry no evidence
        scores[norm < 1e-6] = 0.0
        return scores.reshape(g, g, len(offsets), N_KINDS).max(axis=2)

    def detect_cells(self, image: np.ndarray) -> dict[tuple[int, int], int]:
        scores = self.cell_scores(image)
        best = scores.argmax(axis=2)
        found = {}
        for r in range(self.grid):
            for c in range(self.grid):
                k = best[r, c]
                if scores[r, c, k] >= self.threshold:
                    found[(r, c)] = int(k) + 1
        return found

    def detect(self, image: np.ndarray) -> frozenset[int]:
        return frozenset(self.detect_cells(image).values())

    def calibrate(self, glyphs: Iterable) -> "StrokeDetector":
        """Self-test on clean renders; marks the detector usable only if every glyph round-trips."""
        failures = []
        n = 0
        for glyph in glyphs:
            n += 1
            got = self.detect(glyph.image)
            if got != glyph.kinds:
                failures.append((glyph.placements, sorted(got)))
        if n == 0:
            raise DetectorError("calibration needs at least one glyph")
        if failures:
            self.calibrated = False
            raise DetectorError(f"detector failed on {len(failures)}/{n} clean glyphs, e.g. {failures[0]}")
        self.calibrated = True
        return self


def detect_strokes(image: np.ndarray, alphabet: StrokeAlphabet = DEFAULT_ALPHABET,
                   font_style: FontStyle | None = None, threshold: float = THRESHOLD) -> frozenset[int]:
    from .render import FONT_B

    style = font_style if font_style is not None else FONT_B
    res = np.asarray(image).shape[0]
    return StrokeDetector(style, res, alphabet, threshold).detect(image)
