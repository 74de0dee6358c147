"""Versioned checkpoint container (a numpy ``.npz`` archive with a JSON header)."""

from __future__ import annotations

import json
import os
import zipfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..networks import Parameters
from .adam import AdamState
from .config import TrainConfig

FORMAT = "strokegan-checkpoint"
VERSION = 1


class CheckpointError(ValueError):
    pass


class CorruptCheckpointError(CheckpointError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


@dataclass
class Checkpoint:
    config: TrainConfig
    params: dict[str, Parameters]
    adam: dict[str, AdamState]
    epoch: int
    rng_state: dict
    metrics: list[dict] = field(default_factory=list)
    version: int = VERSION

    def state_arrays(self) -> dict[str, np.ndarray]:
        arrays = {}
        for net, p in self.params.items():
            arrays.update({f"{net}/{k}": v for k, v in p.state().items()})
        for net, s in self.adam.items():
            arrays.update(s.state(f"adam/{net}"))
        return arrays


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> Path:
    path = Path(path)
    header = {
        "format": FORMAT,
        "version": ckpt.version,
        "config": ckpt.config.to_dict(),
        "epoch": ckpt.epoch,
        "rng_state": ckpt.rng_state,
        "metrics": ckpt.metrics,
        "networks": {net: {"tensors": list(p.tensors), "buffers": list(p.buffers)} for net, p in ckpt.params.items()},
        "optimizers": sorted(ckpt.adam),
    }
    arrays = ckpt.state_arrays()
    arrays["__header__"] = np.frombuffer(json.dumps(header, sort_keys=True).encode("utf-8"), dtype=np.uint8)
    tmp = path.with_name(path.name + ".tmp")
    _write_npz(tmp, arrays)
    os.replace(tmp, path)
    return path


def _write_npz(path: Path, arrays: dict[str, np.ndarray]) -> None:
    """An ``np.load``-compatible archive with fixed entry timestamps, so equal checkpoints are equal bytes."""
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        for name in sorted(arrays):
            info = zipfile.ZipInfo(name + ".npy", date_time=(1980, 1, 1, 0, 0, 0))
            with zf.open(info, "w", force_zip64=True) as fh:
                np.lib.format.write_array(fh, np.asarray(arrays[name]), allow_pickle=False)


def load_checkpoint(path: str | Path) -> Checkpoint:
    from ..autodiff import Tensor

    path = Path(path)
    try:
        with np.load(path, allow_pickle=False) as z:
            arrays = {k: z[k] for k in z.files}
    except FileNotFoundError:
        raise
    except (zipfile.BadZipFile, ValueError, EOFError, OSError, KeyError) as exc:
        raise CorruptCheckpointError(f"cannot read checkpoint {path}: {exc}") from None
    if "__header__" not in arrays:
        raise CorruptCheckpointError(f"{path} has no checkpoint header")
    try:
        header = json.loads(arrays.pop("__header__").tobytes().decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptCheckpointError(f"corrupt checkpoint header in {path}: {exc}") from None
    if header.get("format") != FORMAT:
        raise CorruptCheckpointError(f"{path} is not a strokegan checkpoint")
    if header.get("version") != VERSION:
        raise CheckpointVersionError(f"checkpoint version {header.get('version')} unsupported (expected {VERSION})")
    try:
        params = {}
        for net, names in header["networks"].items():
            tensors = {k: Tensor(arrays[f"{net}/param/{k}"], requires_grad=True) for k in names["tensors"]}
            buffers = {k: np.array(arrays[f"{net}/buffer/{k}"], dtype=np.float64) for k in names["buffers"]}
            params[net] = Parameters(tensors, buffers)
        adam = {net: AdamState.from_state(arrays, f"adam/{net}") for net in header["optimizers"]}
        return Checkpoint(TrainConfig.from_dict(header["config"]), params, adam, int(header["epoch"]),
                          header["rng_state"], header.get("metrics", []), header["version"])
    except KeyError as exc:
        raise CorruptCheckpointError(f"checkpoint {path} is missing entry {exc}") from None
