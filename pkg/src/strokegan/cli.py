"""Command-line entry point: ``strokegan {synth,train,eval,experiment,gradcheck}``.

Exit codes: 0 success, 1 validation error (bad flags, config, corpus or
checkpoint), 2 runtime failure (diverged training, failed checks).
"""

from __future__ import annotations

import argparse
import json
import logging
import shutil
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .networks import SpecError
from .strokes import Corpus, CorpusError, build_corpus, load_corpus, save_corpus
from .training import (
    CheckpointError,
    ConfigError,
    TrainConfig,
    TrainingAborted,
    evaluation_context,
    load_checkpoint,
    load_config,
    models_from_checkpoint,
    train,
    translate,
)

log = logging.getLogger("strokegan")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2
# config keys that describe the corpus or the experiment rather than one training run
EXTRA_KEYS = ("n_chars", "corpus_seed", "min_strokes", "max_strokes", "seeds")
SAMPLE_COUNT = 8
METHODS = (("StrokeGAN", None), ("CycleGAN (lambda_st=0)", 0.0))
TABLE_METRICS = ("stroke_error", "content_accuracy", "distinct_count")


class UsageError(Exception):
    """Invalid invocation; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


# -- helpers -----------------------------------------------------------------

def _prepare_out(path: Path, force: bool) -> Path:
    if path.exists() and (not path.is_dir() or any(path.iterdir())):
        if not force:
            raise UsageError(f"output {path} exists and is not empty (use --force to overwrite)")
        if path.is_dir():
            shutil.rmtree(path)
        else:
            path.unlink()
    path.mkdir(parents=True, exist_ok=True)
    return path


def _config(args, epochs: int | None = None) -> tuple[TrainConfig, dict]:
    overrides = {"seed": args.seed}
    if getattr(args, "ablation", None) == "cyclegan":
        overrides["lambda_st"] = 0.0
    if epochs is not None:
        overrides["epochs"] = epochs
    if args.config:
        return load_config(args.config, EXTRA_KEYS, **overrides)
    try:
        return TrainConfig(**{k: v for k, v in overrides.items() if v is not None}), {}
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def _corpus_from_extras(extras: dict, resolution: int) -> Corpus:
    try:
        n_chars = int(extras.get("n_chars", 100))
        seed = int(extras.get("corpus_seed", 0))
        lo, hi = int(extras.get("min_strokes", 2)), int(extras.get("max_strokes", 4))
    except ValueError as exc:
        raise ConfigError(f"corpus setting: {exc}") from None
    return build_corpus(n_chars, (lo, hi), seed=seed, resolution=resolution)


def _load_data(path: str | None, extras: dict, config: TrainConfig) -> Corpus:
    corpus = load_corpus(path) if path else _corpus_from_extras(extras, config.resolution)
    if corpus.resolution != config.resolution:
        raise UsageError(f"corpus resolution {corpus.resolution} does not match config resolution "
                         f"{config.resolution}")
    return corpus


def _to_gray(images: np.ndarray) -> np.ndarray:
    return np.clip(np.rint((images[..., 0] + 1.0) * 127.5), 0, 255).astype(np.uint8)


def sample_ids(corpus: Corpus, k: int = SAMPLE_COUNT) -> list[str]:
    """The fixed test subset shown in every sample grid."""
    ids, _, _ = corpus.source.select("test")
    return sorted(ids)[:k]


def write_sample_grid(path: Path, inputs: np.ndarray, outputs: np.ndarray) -> None:
    """Top row: inputs; bottom row: generated outputs."""
    top = np.concatenate(list(_to_gray(inputs)), axis=1)
    bottom = np.concatenate(list(_to_gray(outputs)), axis=1)
    Image.fromarray(np.concatenate([top, bottom], axis=0)).save(path)


def _echo_config(config: TrainConfig) -> None:
    log.info("config: %s", " ".join(f"{k}={v}" for k, v in config.to_dict().items()))


def run_training(corpus: Corpus, config: TrainConfig, out: Path, resume=None, detector=None, classifier=None):
    """Train with per-epoch sample grids, metrics log and checkpoint under ``out``."""
    samples = out / "samples"
    samples.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(config.dumps(), encoding="utf-8")
    ids = sample_ids(corpus)
    inputs = np.stack([corpus.source.image_of(i) for i in ids])

    def on_epoch(epoch, models, row):
        write_sample_grid(samples / f"epoch_{epoch:04d}.png", inputs, translate(models.G, inputs, config))

    return train(corpus, config, detector=detector, classifier=classifier, resume=resume,
                 log_path=out / "metrics.tsv", checkpoint_path=out / "checkpoint.npz",
                 crash_path=out / "crash.npz", on_epoch=on_epoch)


# -- verbs -------------------------------------------------------------------

def cmd_synth(args) -> int:
    config, extras = _config(args)
    if args.n_chars is not None:
        extras["n_chars"] = args.n_chars
    if args.seed is not None:
        extras["corpus_seed"] = args.seed
    corpus = _corpus_from_extras(extras, args.resolution or config.resolution)
    out = _prepare_out(Path(args.out), args.force)
    save_corpus(corpus, out)
    n_files = 2 * len(corpus.characters)
    print(f"wrote {n_files} glyph images and manifest.json to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    config, extras = _config(args, args.epochs)
    resume = None
    if args.resume:
        resume = load_checkpoint(args.resume)
        if args.config is None:
            config = resume.config.replace(**{k: v for k, v in {"epochs": args.epochs, "seed": args.seed}.items()
                                              if v is not None})
    corpus = _load_data(args.data, extras, config)
    out = Path(args.out)
    if resume is None:
        _prepare_out(out, args.force)
    else:
        out.mkdir(parents=True, exist_ok=True)
    _echo_config(config)
    result = run_training(corpus, config, out, resume=resume)
    last = result.metrics[-1] if result.metrics else {}
    print(f"trained to epoch {result.checkpoint.epoch}; last metrics: {json.dumps(last)}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from .evaluation import evaluate_images

    ckpt = load_checkpoint(args.checkpoint)
    config = ckpt.config
    corpus = load_corpus(args.data)
    if corpus.resolution != config.resolution:
        raise UsageError(f"checkpoint resolution {config.resolution} does not match corpus resolution "
                         f"{corpus.resolution}")
    detector, classifier = evaluation_context(corpus, config)
    models = models_from_checkpoint(ckpt)
    ids, images, codes = corpus.source.select("test")
    report = evaluate_images(translate(models.G, images, config), ids, codes, detector, classifier, corpus.rho)
    out = Path(args.out)
    if out.exists() and not args.force:
        raise UsageError(f"report {out} exists (use --force to overwrite)")
    out.parent.mkdir(parents=True, exist_ok=True)
    report.write(out)
    print(report.to_tsv(), end="")
    return EXIT_OK


@dataclass
class RunOutcome:
    method: str
    seed: int
    metrics: dict | None
    error: str | None = None


def _parse_seeds(text: str) -> list[int]:
    try:
        seeds = [int(s) for s in str(text).replace(",", " ").split()]
    except ValueError:
        raise UsageError(f"seeds must be integers, got {text!r}") from None
    if len(seeds) < 3:
        raise UsageError(f"the experiment needs at least 3 seeds, got {seeds}")
    return seeds


def _summarize(values: list[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()), float(arr.std())


def format_table(outcomes: list[RunOutcome]) -> str:
    """Two method rows, three ``mean ± spread`` metric columns; failed runs are marked."""
    lines = ["method\t" + "\t".join(TABLE_METRICS)]
    for method, _ in METHODS:
        runs = [o for o in outcomes if o.method == method]
        ok = [o for o in runs if o.metrics is not None]
        cells = []
        for m in TABLE_METRICS:
            if ok:
                mu, sd = _summarize([o.metrics[m] for o in ok])
                cell = f"{mu:.4f} ± {sd:.4f}"
            else:
                cell = "n/a"
            failed = [o.seed for o in runs if o.metrics is None]
            if failed:
                cell += " [FAILED seeds " + ",".join(map(str, failed)) + "]"
            cells.append(cell)
        lines.append(method + "\t" + "\t".join(cells))
    return "\n".join(lines) + "\n"


def run_experiment(corpus: Corpus, config: TrainConfig, seeds: list[int], out: Path) -> list[RunOutcome]:
    """Train both methods for every seed; a failing run is recorded, not raised."""
    outcomes = []
    for seed in seeds:
        cfg_seed = config.replace(seed=seed)
        # the evaluation oracle depends on the seed only, so both methods share it
        detector, classifier = evaluation_context(corpus, cfg_seed)
        for method, lam in METHODS:
            cfg = cfg_seed if lam is None else cfg_seed.replace(lambda_st=lam)
            tag = "strokegan" if lam is None else "cyclegan"
            run_dir = out / "runs" / f"{tag}_seed{seed}"
            run_dir.mkdir(parents=True, exist_ok=True)
            log.info("experiment run %s seed %d", method, seed)
            try:
                result = run_training(corpus, cfg, run_dir, detector=detector, classifier=classifier)
            except (TrainingAborted, ArithmeticError) as exc:
                log.error("run %s seed %d failed: %s", method, seed, exc)
                outcomes.append(RunOutcome(method, seed, None, str(exc)))
                continue
            last = result.metrics[-1]
            outcomes.append(RunOutcome(method, seed, {
                "stroke_error": last["stroke_error_test"],
                "content_accuracy": last["content_acc_test"],
                "distinct_count": last["diversity_test"],
                "epochs": last["epoch"],
            }))
    return outcomes


def cmd_experiment(args) -> int:
    config, extras = _config(args, args.epochs)
    seeds = _parse_seeds(args.seeds or extras.get("seeds", "1,2,3"))
    corpus = _load_data(args.data, extras, config)
    out = _prepare_out(Path(args.out), args.force)
    _echo_config(config)
    outcomes = run_experiment(corpus, config, seeds, out)
    table = format_table(outcomes)
    (out / "table.tsv").write_text(table, encoding="utf-8")
    raw = [{"method": o.method, "seed": o.seed, "metrics": o.metrics, "error": o.error} for o in outcomes]
    (out / "runs.json").write_text(json.dumps(raw, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    print(table, end="")
    return EXIT_RUNTIME if any(o.metrics is None for o in outcomes) else EXIT_OK


def cmd_gradcheck(args) -> int:
    from .gradsuite import run_suite

    result = run_suite()
    print(result.summary())
    return EXIT_OK if result.passed else EXIT_RUNTIME


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="key = value training config file")
    common.add_argument("--seed", type=int, help="random seed (overrides the config)")
    common.add_argument("--out", help="output directory (report file for eval)")
    common.add_argument("--force", action="store_true", help="overwrite existing output")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    parser = _Parser(prog="strokegan", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", parents=[common], help="render a two-font synthetic corpus")
    p.add_argument("--n-chars", type=int, help="characters in the inventory (default 100)")
    p.add_argument("--resolution", type=int, choices=(32, 64, 128), help="image size (default from config)")
    p.set_defaults(func=cmd_synth, out_required=True)

    for name, func, helptext in (("train", cmd_train, "train one model"),
                                 ("experiment", cmd_experiment, "StrokeGAN vs lambda_st=0 ablation over seeds")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--data", help="corpus directory (default: synthesize from config)")
        p.add_argument("--epochs", type=int, help="override the configured epoch count")
        p.set_defaults(func=func, out_required=True)
        if name == "train":
            p.add_argument("--resume", help="checkpoint to continue from")
            p.add_argument("--ablation", choices=("cyclegan",), help="cyclegan: set lambda_st = 0")
        else:
            p.add_argument("--seeds", help="comma-separated seeds (at least 3; default 1,2,3)")

    p = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint on a corpus's test split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="corpus directory")
    p.set_defaults(func=cmd_eval, out_required=True)

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference check of every op")
    p.set_defaults(func=cmd_gradcheck, out_required=False)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s", stream=sys.stderr)
    if args.out_required and not args.out:
        parser.exit(EXIT_INVALID, f"strokegan {args.command}: error: --out is required\n")
    try:
        return args.func(args)
    except (UsageError, ConfigError, CorpusError, CheckpointError, SpecError, FileNotFoundError) as exc:
        print(f"strokegan {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001 - any other failure is a runtime failure by contract
        print(f"strokegan {args.command}: runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
