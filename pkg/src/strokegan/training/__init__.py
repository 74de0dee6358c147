from .adam import AdamHyper, AdamState, NonFiniteGradientError, adam_step, collect_grads
from .checkpoint import (
    Checkpoint,
    CheckpointError,
    CheckpointVersionError,
    CorruptCheckpointError,
    load_checkpoint,
    save_checkpoint,
)
from .config import ConfigError, TrainConfig, load_config, parse_config_text
from .losses import adversarial_loss, cycle_loss, generator_adversarial_loss, stroke_loss, total_loss
from .loop import (
    METRIC_FIELDS,
    Models,
    TrainingAborted,
    TrainResult,
    build_models,
    evaluation_context,
    make_checkpoint,
    models_from_checkpoint,
    read_metrics_log,
    train,
    train_step,
    translate,
    write_metrics_log,
)

__all__ = [
    "METRIC_FIELDS", "AdamHyper", "AdamState", "Checkpoint", "CheckpointError", "CheckpointVersionError",
    "ConfigError", "CorruptCheckpointError", "Models", "NonFiniteGradientError", "TrainConfig", "TrainResult",
    "TrainingAborted", "adam_step", "adversarial_loss", "build_models", "collect_grads", "cycle_loss",
    "evaluation_context", "generator_adversarial_loss", "load_checkpoint", "load_config", "make_checkpoint",
    "models_from_checkpoint", "parse_config_text", "read_metrics_log", "save_checkpoint", "stroke_loss",
    "total_loss", "train", "train_step", "translate", "write_metrics_log",
]
