"""Versioned checkpoint archives.

A checkpoint is a zip with a fixed timestamp containing ``meta.json``
(format version, model spec, training metadata) plus one binary tensor entry
per weight, written in sorted name order so identical states hash
identically.  Optimizer moments ride along under ``optimizer/`` for exact
training resumption.
"""

from __future__ import annotations

import hashlib
import io
import json
import zipfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import torch

from ..errors import CorruptCheckpoint, VersionMismatch
from ..tensorio import read_tensor_bytes, write_tensor_bytes
from .core import ModelSpec

FORMAT_VERSION = 1
_EPOCH_STAMP = (1980, 1, 1, 0, 0, 0)


@dataclass
class Checkpoint:
    model_spec: ModelSpec
    state: dict[str, np.ndarray]
    metadata: dict = field(default_factory=dict)
    optimizer_state: dict[str, np.ndarray] = field(default_factory=dict)
    format_version: int = FORMAT_VERSION


def checkpoint_from_model(model, metadata: Optional[dict] = None,
                          optimizer: Optional[torch.optim.Optimizer] = None) -> Checkpoint:
    state = {name: tensor.detach().cpu().numpy().copy()
             for name, tensor in model.state_dict().items()}
    opt_state: dict[str, np.ndarray] = {}
    if optimizer is not None:
        opt_state = _optimizer_tensors(model, optimizer)
    return Checkpoint(model.spec, state, dict(metadata or {}), opt_state)


def _optimizer_tensors(model, optimizer) -> dict[str, np.ndarray]:
    by_param = {id(p): name for name, p in model.named_parameters()}
    out: dict[str, np.ndarray] = {}
    for group in optimizer.param_groups:
        for param in group["params"]:
            name = by_param.get(id(param))
            if name is None or param not in optimizer.state:
                continue
            for key, value in optimizer.state[param].items():
                if isinstance(value, torch.Tensor):
                    out[f"{name}/{key}"] = value.detach().cpu().numpy().copy()
                else:
                    out[f"{name}/{key}"] = np.asarray(value)
    return out


def load_optimizer_state(checkpoint: Checkpoint, model, optimizer) -> None:
    """Restore saved Adam moments onto a freshly built optimizer."""
    by_name = dict(model.named_parameters())
    grouped: dict[str, dict[str, np.ndarray]] = {}
    for key, value in checkpoint.optimizer_state.items():
        name, _, fieldname = key.rpartition("/")
        grouped.setdefault(name, {})[fieldname] = value
    for name, fields in grouped.items():
        param = by_name.get(name)
        if param is None:
            raise VersionMismatch(f"optimizer state for unknown parameter {name!r}")
        optimizer.state[param] = {
            key: torch.from_numpy(np.array(val)) for key, val in fields.items()}


def save_checkpoint(checkpoint: Checkpoint, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {
        "format_version": checkpoint.format_version,
        "model_spec": checkpoint.model_spec.to_dict(),
        "metadata": checkpoint.metadata,
        "tensors": sorted(checkpoint.state),
        "optimizer_tensors": sorted(checkpoint.optimizer_state),
    }
    buffer = io.BytesIO()
    with zipfile.ZipFile(buffer, "w", compression=zipfile.ZIP_STORED) as archive:
        def add(name: str, payload: bytes) -> None:
            info = zipfile.ZipInfo(name, date_time=_EPOCH_STAMP)
            archive.writestr(info, payload)

        add("meta.json", json.dumps(meta, indent=1, sort_keys=True).encode())
        for name in sorted(checkpoint.state):
            add(f"tensors/{name}", write_tensor_bytes(checkpoint.state[name]))
        for name in sorted(checkpoint.optimizer_state):
            add(f"optimizer/{name}", write_tensor_bytes(checkpoint.optimizer_state[name]))
    path.write_bytes(buffer.getvalue())


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise CorruptCheckpoint(f"checkpoint not found: {path}")
    try:
        with zipfile.ZipFile(path) as archive:
            try:
                meta = json.loads(archive.read("meta.json"))
            except KeyError:
                raise CorruptCheckpoint(f"{path}: missing meta.json") from None
            version = meta.get("format_version")
            if version != FORMAT_VERSION:
                raise VersionMismatch(
                    f"{path}: format version {version}, expected {FORMAT_VERSION}")
            spec = ModelSpec.from_dict(meta["model_spec"])
            state = {name: read_tensor_bytes(archive.read(f"tensors/{name}"))
                     for name in meta["tensors"]}
            opt_state = {name: read_tensor_bytes(archive.read(f"optimizer/{name}"))
                         for name in meta.get("optimizer_tensors", [])}
    except zipfile.BadZipFile as exc:
        raise CorruptCheckpoint(f"{path}: not a valid checkpoint archive ({exc})") from exc
    except KeyError as exc:
        raise CorruptCheckpoint(f"{path}: missing archive entry {exc}") from exc
    return Checkpoint(spec, state, meta.get("metadata", {}), opt_state, version)


def restore_state(checkpoint: Checkpoint, model) -> None:
    """Copy checkpoint weights into ``model``; spec kind and shapes must fit."""
    if checkpoint.model_spec.kind != model.spec.kind:
        raise VersionMismatch(
            f"checkpoint is a {checkpoint.model_spec.kind!r} model, "
            f"target is {model.spec.kind!r}")
    target = model.state_dict()
    if set(target) != set(checkpoint.state):
        missing = sorted(set(target) ^ set(checkpoint.state))[:5]
        raise VersionMismatch(f"state entries do not line up (e.g. {missing})")
    converted = {}
    for name, array in checkpoint.state.items():
        tensor = torch.from_numpy(np.array(array))
        if tuple(tensor.shape) != tuple(target[name].shape):
            raise VersionMismatch(
                f"tensor {name!r}: checkpoint {tuple(tensor.shape)} vs "
                f"model {tuple(target[name].shape)}")
        converted[name] = tensor.to(target[name].dtype)
    model.load_state_dict(converted)


def state_hash(model) -> str:
    """Order-stable digest of every parameter and buffer."""
    digest = hashlib.sha256()
    for name, tensor in sorted(model.state_dict().items()):
        digest.update(name.encode())
        digest.update(tensor.detach().cpu().numpy().tobytes())
    return digest.hexdigest()


def checkpoint_version(path: str | Path) -> str:
    """Short content hash identifying a checkpoint file."""
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:12]
