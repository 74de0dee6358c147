from .alphabet import (
    DEFAULT_ALPHABET,
    N_KINDS,
    STROKE_POLYLINES,
    StrokeAlphabet,
    StrokeCodeError,
    bits_to_code,
    code_to_bits,
    decode,
    encode,
)
from .corpus import Character, Corpus, CorpusError, FontCorpus, build_corpus, load_corpus, save_corpus
from .detect import THRESHOLD, DetectorError, StrokeDetector, detect_strokes
from .render import (
    CELL,
    FONT_A,
    FONT_B,
    FontStyle,
    Placement,
    RenderError,
    SyntheticGlyph,
    alphabet_sheet,
    grid_size,
    render_glyph,
)

__all__ = [
    "CELL", "DEFAULT_ALPHABET", "FONT_A", "FONT_B", "N_KINDS", "STROKE_POLYLINES", "THRESHOLD", "Character",
    "Corpus", "CorpusError", "DetectorError", "FontCorpus", "FontStyle", "Placement", "RenderError",
    "StrokeAlphabet", "StrokeCodeError", "StrokeDetector", "SyntheticGlyph", "alphabet_sheet", "bits_to_code", "build_corpus",
    "code_to_bits", "decode", "detect_strokes", "encode", "grid_size", "load_corpus", "render_glyph",
    "save_corpus",
]
