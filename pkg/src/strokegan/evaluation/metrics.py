from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from ..strokes import Corpus, StrokeDetector, decode
from .diversity import diversity


class MetricError(ValueError):
    pass


@dataclass
class MetricReport:
    stroke_error: float
    content_accuracy: float
    distinct_count: int
    mean_pairwise_distance: float
    n_samples: int

    FIELDS = ("stroke_error", "content_accuracy", "distinct_count", "mean_pairwise_distance", "n_samples")

    def to_tsv(self) -> str:
        values = asdict(self)
        return "\t".join(self.FIELDS) + "\n" + "\t".join(_fmt(values[f]) for f in self.FIELDS) + "\n"

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_tsv(), encoding="utf-8")

    @classmethod
    def read(cls, path: str | Path) -> "MetricReport":
        header, row = Path(path).read_text(encoding="utf-8").splitlines()[:2]
        vals = dict(zip(header.split("\t"), row.split("\t")))
        return cls(float(vals["stroke_error"]), float(vals["content_accuracy"]), int(vals["distinct_count"]),
                   float(vals["mean_pairwise_distance"]), int(vals["n_samples"]))


def _fmt(v) -> str:
    return str(v) if isinstance(v, int) else repr(float(v))


def _kind_sets(true_codes) -> list[frozenset[int]]:
    out = []
    for c in true_codes:
        out.append(c if isinstance(c, frozenset) else (frozenset(c) if isinstance(c, set) else decode(c)))
    return out


def stroke_error(generated: np.ndarray, true_codes: Sequence, detector: StrokeDetector) -> float:
    """(missing + redundant stroke kinds) / true stroke kinds, pooled over the batch."""
    if not detector.calibrated:
        raise MetricError("stroke detector has not passed its clean-render self-test")
    truths = _kind_sets(true_codes)
    if len(truths) != len(generated):
        raise MetricError(f"{len(generated)} images but {len(truths)} stroke codes")
    errors = total = 0
    for image, truth in zip(generated, truths):
        found = detector.detect(image)
        errors += len(truth - found) + len(found - truth)
        total += len(truth)
    if total == 0:
        raise MetricError("true stroke sets are empty")
    return errors / total


def content_accuracy(generated: np.ndarray, identities: Sequence[str], classifier) -> float:
    if len(identities) != len(generated):
        raise MetricError(f"{len(generated)} images but {len(identities)} identities")
    unknown = set(identities) - set(classifier.classes)
    if unknown:
        raise MetricError(f"identities not known to the classifier: {sorted(unknown)[:5]}")
    pred = classifier.predict(generated)
    return float(np.mean([p == t for p, t in zip(pred, identities)]))


def evaluate_images(generated: np.ndarray, identities: Sequence[str], true_codes, detector: StrokeDetector,
                    classifier, rho: float) -> MetricReport:
    count, dist = diversity(generated, rho)
    return MetricReport(
        stroke_error=stroke_error(generated, true_codes, detector),
        content_accuracy=content_accuracy(generated, identities, classifier),
        distinct_count=count,
        mean_pairwise_distance=dist,
        n_samples=len(generated),
    )


def evaluate_generator(generate: Callable[[np.ndarray], np.ndarray], corpus: Corpus, detector: StrokeDetector,
                       classifier, split: str = "test") -> MetricReport:
    """Translate the source-font ``split`` and score the outputs."""
    ids, images, codes = corpus.source.select(split)
    return evaluate_images(generate(images), ids, codes, detector, classifier, corpus.rho)


def calibrated_detector(corpus: Corpus, glyphs: Iterable | None = None) -> StrokeDetector:
    """Target-font detector, self-tested on the corpus' clean target renders."""
    from ..strokes import render_glyph

    det = StrokeDetector(corpus.target.style, corpus.resolution)
    if glyphs is None:
        glyphs = [render_glyph(c.placements, corpus.target.style, corpus.resolution) for c in corpus.characters]
    return det.calibrate(glyphs)
