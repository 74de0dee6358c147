"""Two-font synthetic corpora and their on-disk form (PNG files + manifest)."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .alphabet import N_KINDS, bits_to_code, code_to_bits, encode
from .render import FONT_A, FONT_B, FontStyle, Placement, grid_size, render_glyph, to_uint8

MANIFEST = "manifest.json"
FORMAT = "strokegan-corpus"
VERSION = 1


class CorpusError(ValueError):
    pass


@dataclass(frozen=True)
class Character:
    char_id: str
    placements: tuple[Placement, ...]
    split: str

    @property
    def kinds(self) -> frozenset[int]:
        return frozenset(p.kind for p in self.placements)

    @property
    def code(self) -> np.ndarray:
        return encode(p.kind for p in self.placements)


@dataclass
class FontCorpus:
    """All renders of one font, in this font's own (shuffled) order."""

    style: FontStyle
    ids: list[str]
    images: np.ndarray  # (n, h, w, 3)
    codes: np.ndarray  # (n, 32)
    splits: list[str]

    def select(self, split: str) -> tuple[list[str], np.ndarray, np.ndarray]:
        idx = [i for i, s in enumerate(self.splits) if s == split]
        return [self.ids[i] for i in idx], self.images[idx], self.codes[idx]

    def image_of(self, char_id: str) -> np.ndarray:
        return self.images[self.ids.index(char_id)]


@dataclass
class Corpus:
    characters: list[Character]
    source: FontCorpus
    target: FontCorpus
    resolution: int
    seed: int
    rho: float
    similar_pair: tuple[str, str]
    meta: dict = field(default_factory=dict)

    @property
    def codes(self) -> np.ndarray:
        return np.stack([c.code for c in self.characters])

    def character(self, char_id: str) -> Character:
        for c in self.characters:
            if c.char_id == char_id:
                return c
        raise KeyError(char_id)

    @property
    def fonts(self) -> dict[str, FontCorpus]:
        return {self.source.style.name: self.source, self.target.style.name: self.target}


def _sample_inventory(n_chars: int, lo: int, hi: int, grid: int, rng: np.random.Generator) -> list[tuple[Placement, ...]]:
    n_cells = grid * grid
    if not 1 <= lo <= hi <= min(12, n_cells):
        raise CorpusError(f"strokes_per_char_range ({lo}, {hi}) invalid for a {grid}x{grid} grid")
    seen: set[tuple[Placement, ...]] = set()
    inventory: list[tuple[Placement, ...]] = []

    # a pair of distinct characters sharing one stroke code, built by swapping kinds between cells
    k = max(2, lo)
    if k > hi:
        raise CorpusError("need at least 2 strokes per character to build the same-code pair")
    cells = rng.choice(n_cells, size=k, replace=False)
    kinds = rng.choice(N_KINDS, size=k, replace=False) + 1
    first = tuple(sorted(Placement(int(c) // grid, int(c) % grid, int(t)) for c, t in zip(cells, kinds)))
    second = tuple(sorted(Placement(int(c) // grid, int(c) % grid, int(t)) for c, t in zip(cells, np.roll(kinds, 1))))
    for glyph in (first, second):
        seen.add(glyph)
        inventory.append(glyph)

    attempts = 0
    while len(inventory) < n_chars:
        attempts += 1
        if attempts > 1000 * n_chars:
            raise CorpusError("character inventory space exhausted")
        k = int(rng.integers(lo, hi + 1))
        cells = rng.choice(n_cells, size=k, replace=False)
        kinds = rng.integers(1, N_KINDS + 1, size=k)
        glyph = tuple(sorted(Placement(int(c) // grid, int(c) % grid, int(t)) for c, t in zip(cells, kinds)))
        if glyph in seen:
            continue
        seen.add(glyph)
        inventory.append(glyph)
    return inventory


def _render_font(chars: list[Character], style: FontStyle, resolution: int, order: np.ndarray) -> FontCorpus:
    picked = [chars[i] for i in order]
    images = np.stack([render_glyph(c.placements, style, resolution).image for c in picked])
    return FontCorpus(style, [c.char_id for c in picked], images, np.stack([c.code for c in picked]),
                      [c.split for c in picked])


def build_corpus(n_chars: int = 100, strokes_per_char_range: tuple[int, int] = (2, 4), seed: int = 0,
                 resolution: int = 32, source_style: FontStyle = FONT_A, target_style: FontStyle = FONT_B,
                 test_fraction: float = 0.1) -> Corpus:
    """Sample a character inventory once and render it in both fonts.

    The split is drawn per character (so test characters are unseen in both
    fonts); each font is then shuffled independently.
    """
    if n_chars < 10:
        raise CorpusError("n_chars must be at least 10")
    rng = np.random.default_rng(seed)
    grid = grid_size(resolution)
    lo, hi = strokes_per_char_range
    inventory = _sample_inventory(n_chars, lo, hi, grid, rng)
    n_test = max(1, int(round(test_fraction * n_chars)))
    test_idx = set(rng.permutation(n_chars)[:n_test].tolist())
    chars = [Character(f"c{i:04d}", glyph, "test" if i in test_idx else "train") for i, glyph in enumerate(inventory)]
    source = _render_font(chars, source_style, resolution, rng.permutation(n_chars))
    target = _render_font(chars, target_style, resolution, rng.permutation(n_chars))

    from ..evaluation.diversity import calibrate_rho

    rho = calibrate_rho(target.images)
    return Corpus(chars, source, target, resolution, seed, rho, (chars[0].char_id, chars[1].char_id),
                  {"n_chars": n_chars, "strokes_per_char_range": [lo, hi], "test_fraction": test_fraction})


# --- disk format --------------------------------------------------------------

def _manifest(corpus: Corpus) -> dict:
    fonts = {}
    for role, fc in (("source", corpus.source), ("target", corpus.target)):
        records = []
        for cid, split in zip(fc.ids, fc.splits):
            ch = corpus.character(cid)
            records.append({
                "id": cid,
                "file": f"{fc.style.name}/{cid}.png",
                "kinds": sorted(ch.kinds),
                "code": code_to_bits(ch.code),
                "split": split,
                "placements": [[p.row, p.col, p.kind] for p in ch.placements],
            })
        fonts[role] = {"style": fc.style.to_dict(), "records": records}
    return {
        "format": FORMAT,
        "version": VERSION,
        "resolution": corpus.resolution,
        "seed": corpus.seed,
        "rho": corpus.rho,
        "similar_pair": list(corpus.similar_pair),
        "meta": corpus.meta,
        "fonts": fonts,
    }


def save_corpus(corpus: Corpus, root: str | Path) -> Path:
    root = Path(root)
    for fc in (corpus.source, corpus.target):
        (root / fc.style.name).mkdir(parents=True, exist_ok=True)
        for cid, img in zip(fc.ids, fc.images):
            Image.fromarray(to_uint8(img[:, :, 0])).save(root / fc.style.name / f"{cid}.png")
    path = root / MANIFEST
    path.write_text(json.dumps(_manifest(corpus), indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _load_png(path: Path, resolution: int) -> np.ndarray:
    if not path.is_file():
        raise CorpusError(f"missing image file {path}")
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"), dtype=np.float64)
    if arr.shape != (resolution, resolution):
        raise CorpusError(f"{path} is {arr.shape[1]}x{arr.shape[0]}, expected {resolution}x{resolution}")
    gray = arr / 255.0 * 2.0 - 1.0
    return np.repeat(gray[:, :, None], 3, axis=2)


def load_corpus(root: str | Path) -> Corpus:
    root = Path(root)
    path = root / MANIFEST
    if not path.is_file():
        raise CorpusError(f"no {MANIFEST} under {root}")
    try:
        man = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CorpusError(f"corrupt manifest {path}: {exc}") from None
    if man.get("format") != FORMAT or man.get("version") != VERSION:
        raise CorpusError(f"unsupported manifest format/version in {path}")
    res = int(man["resolution"])
    chars: dict[str, Character] = {}
    fonts = {}
    for role in ("source", "target"):
        entry = man["fonts"][role]
        style = FontStyle.from_dict(entry["style"])
        ids, images, codes, splits = [], [], [], []
        for rec in entry["records"]:
            code = bits_to_code(rec["code"])
            placements = tuple(Placement(r, c, k) for r, c, k in rec["placements"])
            if not np.array_equal(encode(p.kind for p in placements), code) or sorted(rec["kinds"]) != sorted(
                    {p.kind for p in placements}):
                raise CorpusError(f"record {rec['id']} has inconsistent kinds/code")
            ch = chars.setdefault(rec["id"], Character(rec["id"], placements, rec["split"]))
            if ch.placements != placements or ch.split != rec["split"]:
                raise CorpusError(f"record {rec['id']} disagrees between fonts")
            ids.append(rec["id"])
            images.append(_load_png(root / rec["file"], res))
            codes.append(code)
            splits.append(rec["split"])
        fonts[role] = FontCorpus(style, ids, np.stack(images), np.stack(codes), splits)
    ordered = [chars[k] for k in sorted(chars)]
    return Corpus(ordered, fonts["source"], fonts["target"], res, int(man["seed"]), float(man["rho"]),
                  tuple(man["similar_pair"]), man.get("meta", {}))
