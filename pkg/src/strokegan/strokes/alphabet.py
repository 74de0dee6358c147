"""The 32-kind stroke alphabet and the one-bit stroke code.

Stroke geometry is synthetic: each kind is a polyline on a 3x3 lattice of
the unit box (x right, y down). The set was chosen so that any two kinds
rendered in either font have normalized cross-correlation below 0.56.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

N_KINDS = 32

# kind i (1-based) -> polyline
STROKE_POLYLINES: tuple[tuple[tuple[float, float], ...], ...] = (
    ((0.0, 0.5), (1.0, 0.5)),
    ((0.5, 0.0), (0.5, 1.0)),
    ((0.0, 1.0), (1.0, 0.0)),
    ((0.0, 0.0), (1.0, 1.0)),
    ((0.0, 0.0), (1.0, 0.0), (1.0, 0.5)),
    ((0.0, 0.5), (0.0, 1.0), (1.0, 1.0)),
    ((0.0, 0.0), (0.0, 0.5)),
    ((1.0, 0.5), (1.0, 1.0)),
    ((0.0, 1.0), (0.5, 0.0)),
    ((0.5, 1.0), (1.0, 0.0)),
    ((0.0, 0.5), (1.0, 0.0)),
    ((0.0, 1.0), (1.0, 0.5)),
    ((0.0, 0.0), (0.5, 1.0), (0.0, 1.0)),
    ((1.0, 0.0), (0.5, 0.0), (1.0, 1.0)),
    ((0.0, 0.0), (1.0, 0.5)),
    ((0.0, 0.5), (1.0, 1.0)),
    ((0.0, 0.5), (0.5, 1.0)),
    ((0.5, 0.0), (1.0, 0.5)),
    ((0.0, 0.5), (0.5, 0.0)),
    ((0.5, 1.0), (1.0, 0.5)),
    ((0.0, 0.0), (0.5, 0.0), (0.5, 0.5)),
    ((0.0, 1.0), (0.0, 0.5), (0.5, 0.5)),
    ((0.0, 1.0), (0.5, 1.0), (0.5, 0.5)),
    ((0.5, 0.5), (0.5, 0.0), (1.0, 0.0)),
    ((0.5, 0.5), (0.5, 1.0), (1.0, 1.0)),
    ((0.5, 0.5), (1.0, 0.5), (1.0, 0.0)),
    ((0.0, 0.0), (0.5, 0.5), (1.0, 0.0)),
    ((0.0, 1.0), (0.5, 0.5), (1.0, 1.0)),
    ((0.0, 1.0), (0.0, 0.0), (1.0, 0.0)),
    ((0.0, 1.0), (1.0, 1.0), (1.0, 0.0)),
    ((0.0, 0.5), (0.5, 0.5), (0.5, 1.0)),
    ((0.5, 0.0), (0.5, 0.5), (1.0, 0.5)),
)


class StrokeCodeError(ValueError):
    pass


@dataclass(frozen=True)
class StrokeAlphabet:
    polylines: tuple[tuple[tuple[float, float], ...], ...] = STROKE_POLYLINES

    def __post_init__(self):
        if len(self.polylines) != N_KINDS:
            raise StrokeCodeError(f"alphabet must have {N_KINDS} strokes, got {len(self.polylines)}")

    def __len__(self) -> int:
        return N_KINDS

    def polyline(self, kind: int) -> np.ndarray:
        check_kind(kind)
        return np.asarray(self.polylines[kind - 1], dtype=np.float64)


DEFAULT_ALPHABET = StrokeAlphabet()


def check_kind(kind: int) -> int:
    if isinstance(kind, bool) or int(kind) != kind or not 1 <= kind <= N_KINDS:
        raise StrokeCodeError(f"stroke kind {kind!r} outside 1..{N_KINDS}")
    return int(kind)


def encode(stroke_kinds: Iterable[int]) -> np.ndarray:
    """Indicator vector: entry ``i-1`` is 1 iff kind ``i`` occurs (multiplicity ignored)."""
    kinds = [check_kind(k) for k in stroke_kinds]
    if not kinds:
        raise StrokeCodeError("cannot encode an empty stroke set")
    code = np.zeros(N_KINDS, dtype=np.float64)
    code[np.asarray(kinds) - 1] = 1.0
    return code


def decode(code: np.ndarray) -> frozenset[int]:
    code = np.asarray(code)
    if code.shape != (N_KINDS,) or not np.all((code == 0) | (code == 1)):
        raise StrokeCodeError("stroke code must be a 32-vector of 0/1 entries")
    return frozenset(int(i) + 1 for i in np.flatnonzero(code))


def code_to_bits(code: np.ndarray) -> str:
    decode(code)
    return "".join("1" if b else "0" for b in np.asarray(code))


def bits_to_code(bits: str) -> np.ndarray:
    if len(bits) != N_KINDS or set(bits) - {"0", "1"}:
        raise StrokeCodeError(f"invalid stroke bitstring {bits!r}")
    return np.array([1.0 if ch == "1" else 0.0 for ch in bits])
