"""Training configuration and its flat ``key = value`` file format."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .adam import AdamHyper


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class TrainConfig:
    lambda_cyc: float = 10.0
    lambda_st: float = 0.18
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    adam_eps: float = 1e-8
    epochs: int = 200
    batch_size: int = 16
    seed: int = 0
    generator_mode: str = "single"
    resolution: int = 32
    scale_factor: int = 8
    n_res_blocks: int = 3
    d_stride_layers: int = 4
    # "nonsaturating": G minimizes -E log D(G(x)); "literal": E log(1 - D(G(x)))
    adv_form: str = "nonsaturating"
    # "minimize": D lowers the stroke loss (auxiliary-classifier convention); "maximize": literal minimax sign
    d_stroke_sign: str = "minimize"
    real_stroke_supervision: bool = False
    # "sum": per-sample L1 norm; "mean": L1 norm over element count
    cycle_reduction: str = "mean"
    eval_bn: str = "running"
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.lambda_cyc < 0 or self.lambda_st < 0:
            raise ConfigError("lambda_cyc and lambda_st must be non-negative")
        AdamHyper(self.lr, self.beta1, self.beta2, self.adam_eps)
        if self.epochs < 0 or self.batch_size < 2:
            raise ConfigError("epochs must be >= 0 and batch_size >= 2")
        choices = {
            "generator_mode": ("single", "dual"),
            "adv_form": ("nonsaturating", "literal"),
            "d_stroke_sign": ("minimize", "maximize"),
            "eval_bn": ("running", "batch"),
            "cycle_reduction": ("sum", "mean"),
        }
        for key, allowed in choices.items():
            if getattr(self, key) not in allowed:
                raise ConfigError(f"{key} must be one of {allowed}, got {getattr(self, key)!r}")

    @property
    def adam(self) -> AdamHyper:
        return AdamHyper(self.lr, self.beta1, self.beta2, self.adam_eps)

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def dumps(self) -> str:
        lines = ["# strokegan training config"]
        for f in fields(self):
            v = getattr(self, f.name)
            lines.append(f"{f.name} = {str(v).lower() if isinstance(v, bool) else v}")
        return "\n".join(lines) + "\n"


def _coerce(name: str, typ: str, raw: str, line: int):
    try:
        if typ == "bool":
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if typ == "int":
            return int(raw)
        if typ == "float":
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"cannot parse {name} = {raw!r} as {typ}", line) from None


def parse_config_text(text: str, extra_keys: tuple[str, ...] = ()) -> tuple[dict, dict]:
    """Parse ``key = value`` lines; returns (TrainConfig fields, extra keys)."""
    types = {f.name: f.type for f in fields(TrainConfig)}
    values: dict = {}
    extras: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if key in values or key in extras:
            raise ConfigError(f"duplicate key {key!r}", lineno)
        if key in types:
            values[key] = _coerce(key, types[key], value, lineno)
        elif key in extra_keys:
            extras[key] = value
        else:
            raise ConfigError(f"unknown key {key!r}", lineno)
    return values, extras


def load_config(path: str | Path, extra_keys: tuple[str, ...] = (), **overrides) -> tuple[TrainConfig, dict]:
    values, extras = parse_config_text(Path(path).read_text(encoding="utf-8"), extra_keys)
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return TrainConfig(**values), extras
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
