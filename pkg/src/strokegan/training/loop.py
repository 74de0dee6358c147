"""Alternating discriminator/generator updates and the epoch loop."""

from __future__ import annotations

import contextlib
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator

import numpy as np

from ..autodiff import AutodiffError, Tape, Tensor, backward, no_tape, ops
from ..networks import (
    Discriminator,
    Network,
    Parameters,
    build_discriminator,
    build_generator,
    discriminator_spec,
    generator_spec,
    src_probability,
)
from ..strokes import Corpus
from .adam import AdamState, NonFiniteGradientError, adam_step, collect_grads
from .checkpoint import Checkpoint, save_checkpoint
from .config import TrainConfig
from .losses import adversarial_loss, cycle_loss, generator_adversarial_loss, stroke_loss

log = logging.getLogger(__name__)

METRIC_FIELDS = ("epoch", "L_adv_D", "L_adv_G", "L_cyc", "L_st", "stroke_error_test", "content_acc_test",
                 "diversity_test")
LOSS_KEYS = ("L_adv_D", "L_adv_G", "L_cyc", "L_st")


class TrainingAborted(RuntimeError):
    pass


@dataclass
class Models:
    G: Network
    D: Discriminator
    F: Network | None = None
    D_A: Discriminator | None = None
    opt: dict[str, AdamState] = field(default_factory=dict)

    @property
    def generators(self) -> dict[str, Network]:
        return {k: v for k, v in (("G", self.G), ("F", self.F)) if v is not None}

    @property
    def discriminators(self) -> dict[str, Network]:
        return {k: v for k, v in (("D", self.D), ("D_A", self.D_A)) if v is not None}

    @property
    def params(self) -> dict[str, Parameters]:
        return {k: net.params for k, net in {**self.generators, **self.discriminators}.items()}


def _seed(config: TrainConfig, slot: int) -> int:
    return int(np.random.SeedSequence([config.seed, slot]).generate_state(1)[0])


def build_models(config: TrainConfig, params: dict[str, Parameters] | None = None,
                 opt: dict[str, AdamState] | None = None) -> Models:
    gspec = generator_spec(config.resolution, config.scale_factor, config.n_res_blocks)
    dspec = discriminator_spec(config.resolution, config.scale_factor, config.d_stride_layers)
    p = params or {}
    models = Models(build_generator(gspec, _seed(config, 1), p.get("G")),
                    build_discriminator(dspec, _seed(config, 2), p.get("D")))
    if config.generator_mode == "dual":
        models.F = build_generator(gspec, _seed(config, 3), p.get("F"))
        models.D_A = build_discriminator(dspec, _seed(config, 4), p.get("D_A"))
    models.opt = opt if opt is not None else {k: AdamState() for k in models.params}
    return models


@contextlib.contextmanager
def frozen(*params: Parameters) -> Iterator[None]:
    """Take parameters off the tape so an update cannot touch them."""
    for p in params:
        p.set_requires_grad(False)
    try:
        yield
    finally:
        for p in params:
            p.set_requires_grad(True)


def _step(models: Models, names, config: TrainConfig) -> None:
    for name in names:
        params = models.params[name]
        adam_step(params.tensors, collect_grads(params), models.opt[name], config.adam)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor._wrap(np.asarray(x, dtype=np.float64))


def train_step(batch_a, batch_b, models: Models, config: TrainConfig) -> dict[str, float]:
    """One discriminator update followed by one generator update.

    ``batch_a`` / ``batch_b`` are ``(images, codes)`` pairs from the source
    and target corpora; they are unrelated samples (no pairing).
    """
    if batch_b is None:
        raise ValueError("a target-domain batch is required for the discriminator's real term")
    xa, ca = _as_tensor(batch_a[0]), np.asarray(batch_a[1], dtype=np.float64)
    xb, cb = _as_tensor(batch_b[0]), np.asarray(batch_b[1], dtype=np.float64)
    dual = models.F is not None
    lam_st = config.lambda_st
    sign = 1.0 if config.d_stroke_sign == "minimize" else -1.0

    # discriminator update; generator outputs enter as constants
    with no_tape():
        fake_b = models.G(xa, update_stats=False)
        fake_a = models.F(xb, update_stats=False) if dual else None
    for d in models.discriminators.values():
        d.params.zero_grad()
    # each tape is reset after its backward pass: nodes and the tensors
    # they produced reference each other, so otherwise only the cyclic
    # collector would free the saved activations
    with Tape() as tape:
        src_r, st_r = models.D(xb)
        src_f, st_f = models.D(fake_b)
        l_adv_d = adversarial_loss(src_probability(src_r), src_probability(src_f))
        loss_d = ops.neg(l_adv_d)
        if dual:
            src_ra, _ = models.D_A(xa)
            src_fa, _ = models.D_A(fake_a)
            loss_d = ops.sub(loss_d, adversarial_loss(src_probability(src_ra), src_probability(src_fa)))
        if lam_st > 0:
            loss_d = ops.add(loss_d, ops.scale(stroke_loss(st_f, ca), sign * lam_st))
            if config.real_stroke_supervision:
                loss_d = ops.add(loss_d, ops.scale(stroke_loss(st_r, cb), lam_st))
        backward(loss_d)
        tape.reset()
    _step(models, models.discriminators, config)

    # generator update with every discriminator frozen
    for g in models.generators.values():
        g.params.zero_grad()
    with frozen(*(d.params for d in models.discriminators.values())), Tape() as tape:
        fake_b = models.G(xa)
        src_f, st_f = models.D(fake_b, update_stats=False)
        l_adv_g = generator_adversarial_loss(src_probability(src_f), config.adv_form)
        if dual:
            rec_a = models.F(fake_b)
            fake_a = models.F(xb)
            rec_b = models.G(fake_a)
            src_fa, _ = models.D_A(fake_a, update_stats=False)
            l_adv_g = ops.add(l_adv_g, generator_adversarial_loss(src_probability(src_fa), config.adv_form))
            l_cyc = ops.add(cycle_loss(xa, rec_a, config.cycle_reduction), cycle_loss(xb, rec_b, config.cycle_reduction))
        else:
            rec_a = models.G(fake_b)
            l_cyc = cycle_loss(xa, rec_a, config.cycle_reduction)
        loss_g = ops.add(l_adv_g, ops.scale(l_cyc, config.lambda_cyc))
        l_st = stroke_loss(st_f, ca)
        if lam_st > 0:
            loss_g = ops.add(loss_g, ops.scale(l_st, lam_st))
        backward(loss_g)
        tape.reset()
    _step(models, models.generators, config)

    report = {"L_adv_D": l_adv_d.item(), "L_adv_G": l_adv_g.item(), "L_cyc": l_cyc.item(), "L_st": l_st.item()}
    if not all(np.isfinite(v) for v in report.values()):
        raise TrainingAborted(f"non-finite loss in train step: {report}")
    return report


def translate(generator: Network, images: np.ndarray, config: TrainConfig, chunk: int = 64) -> np.ndarray:
    """Run the generator without recording; BN mode per ``config.eval_bn``."""
    with no_tape():
        if config.eval_bn == "batch":
            return generator(_as_tensor(images), train=True, update_stats=False).data
        outs = [generator(_as_tensor(images[i:i + chunk]), train=False).data for i in range(0, len(images), chunk)]
    return np.concatenate(outs)


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    metrics: list[dict]
    models: Models


def _format_row(row: dict) -> str:
    return "\t".join(str(row[k]) if k in ("epoch", "diversity_test") else repr(float(row[k])) for k in METRIC_FIELDS)


def metrics_header() -> str:
    return "\t".join(METRIC_FIELDS)


def write_metrics_log(path: str | Path, rows: list[dict]) -> None:
    Path(path).write_text(metrics_header() + "\n" + "".join(_format_row(r) + "\n" for r in rows), encoding="utf-8")


def read_metrics_log(path: str | Path) -> list[dict]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != metrics_header():
        raise ValueError(f"{path} is not a metrics log")
    rows = []
    for line in lines[1:]:
        vals = dict(zip(METRIC_FIELDS, line.split("\t")))
        rows.append({k: (int(v) if k in ("epoch", "diversity_test") else float(v)) for k, v in vals.items()})
    return rows


def make_checkpoint(models: Models, config: TrainConfig, epoch: int, rng: np.random.Generator,
                    metrics: list[dict]) -> Checkpoint:
    params = {k: p.copy() for k, p in models.params.items()}
    opt = {k: AdamState({n: a.copy() for n, a in s.m.items()}, {n: a.copy() for n, a in s.v.items()}, s.t)
           for k, s in models.opt.items()}
    return Checkpoint(config, params, opt, epoch, rng.bit_generator.state, [dict(r) for r in metrics])


def evaluation_context(corpus: Corpus, config: TrainConfig):
    """The calibrated stroke detector and guarded content classifier for ``corpus``."""
    from ..evaluation import calibrated_detector, train_content_classifier

    detector = calibrated_detector(corpus)
    classifier = train_content_classifier(corpus.target.images, corpus.target.ids, seed=config.seed)
    return detector, classifier


def train(corpus: Corpus, config: TrainConfig, *, detector=None, classifier=None, resume: Checkpoint | None = None,
          log_path: str | Path | None = None, checkpoint_path: str | Path | None = None,
          crash_path: str | Path | None = None,
          on_epoch: Callable[[int, Models, dict], None] | None = None) -> TrainResult:
    """Train for ``config.epochs`` epochs (continuing from ``resume`` if given).

    Every epoch appends one metrics row (mean losses plus test-split
    metrics) to the in-memory log and, if given, to ``log_path``.
    """
    from ..evaluation import evaluate_images

    ids_a, img_a, code_a = corpus.source.select("train")
    ids_b, img_b, code_b = corpus.target.select("train")
    if len(img_a) == 0 or len(img_b) == 0:
        raise ValueError("training corpus is empty")
    bs = config.batch_size
    steps = min(len(img_a), len(img_b)) // bs
    if steps == 0:
        raise ValueError(f"batch_size {bs} exceeds the training split ({min(len(img_a), len(img_b))} images)")
    if detector is None or classifier is None:
        det, clf = evaluation_context(corpus, config)
        detector, classifier = detector or det, classifier or clf
    test_ids, test_img, test_codes = corpus.source.select("test")

    rng = np.random.default_rng(config.seed)
    if resume is not None:
        if resume.config.to_dict() != {**config.to_dict(), "epochs": resume.config.epochs}:
            log.warning("resuming with a config that differs from the checkpoint's")
        models = build_models(config, {k: p.copy() for k, p in resume.params.items()},
                              make_checkpoint_opt(resume))
        rng.bit_generator.state = resume.rng_state
        start = resume.epoch
        metrics = [dict(r) for r in resume.metrics]
    else:
        models = build_models(config)
        start = 0
        metrics = []
    if log_path is not None:
        log_path = Path(log_path)
        if resume is None or not log_path.exists():
            write_metrics_log(log_path, metrics)

    ckpt = make_checkpoint(models, config, start, rng, metrics)
    for epoch in range(start + 1, config.epochs + 1):
        perm_a, perm_b = rng.permutation(len(img_a)), rng.permutation(len(img_b))
        sums = dict.fromkeys(LOSS_KEYS, 0.0)
        try:
            for s in range(steps):
                a, b = perm_a[s * bs:(s + 1) * bs], perm_b[s * bs:(s + 1) * bs]
                rep = train_step((img_a[a], code_a[a]), (img_b[b], code_b[b]), models, config)
                for k in LOSS_KEYS:
                    sums[k] += rep[k]
        except (AutodiffError, NonFiniteGradientError, TrainingAborted) as exc:
            if crash_path is not None:
                save_checkpoint(ckpt, crash_path)
            raise TrainingAborted(f"epoch {epoch}: {exc}") from exc
        fake = translate(models.G, test_img, config)
        rep = evaluate_images(fake, test_ids, test_codes, detector, classifier, corpus.rho)
        row = {"epoch": epoch, **{k: sums[k] / steps for k in LOSS_KEYS},
               "stroke_error_test": rep.stroke_error, "content_acc_test": rep.content_accuracy,
               "diversity_test": rep.distinct_count}
        metrics.append(row)
        if log_path is not None:
            with open(log_path, "a", encoding="utf-8") as fh:
                fh.write(_format_row(row) + "\n")
        log.info("epoch %d: %s", epoch, {k: round(v, 4) for k, v in row.items()})
        ckpt = make_checkpoint(models, config, epoch, rng, metrics)
        if checkpoint_path is not None and config.checkpoint_every and epoch % config.checkpoint_every == 0:
            save_checkpoint(ckpt, checkpoint_path)
        if on_epoch is not None:
            on_epoch(epoch, models, row)
    if checkpoint_path is not None:
        save_checkpoint(ckpt, checkpoint_path)
    return TrainResult(ckpt, metrics, models)


def make_checkpoint_opt(ckpt: Checkpoint) -> dict[str, AdamState]:
    return {k: AdamState({n: a.copy() for n, a in s.m.items()}, {n: a.copy() for n, a in s.v.items()}, s.t)
            for k, s in ckpt.adam.items()}


def models_from_checkpoint(ckpt: Checkpoint) -> Models:
    return build_models(ckpt.config, {k: p.copy() for k, p in ckpt.params.items()}, make_checkpoint_opt(ckpt))
