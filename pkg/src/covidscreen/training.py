"""Adam + binary-cross-entropy training with exact reproducibility.

Every stochastic choice (batch order, augmentation draws) derives from
numpy SeedSequence([seed, epoch, ...]) rather than carried generator state,
so a resumed run replays the remaining epochs bit-for-bit.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch

from .errors import DivergenceDetected, EmptySplit, ShapeMismatch
from .evaluation import batch_tensor, score_records
from .manifest import CLASS_ORDER, DatasetManifest, ImageRecord, Label, Split
from .metrics import roc_auc
from .models import (Checkpoint, DeepCXRNet, checkpoint_from_model,
                     load_optimizer_state, model_from_checkpoint, restore_state)
from .preprocess import Mode, PreprocessConfig, load_image, run_pipeline

PROB_EPS = 1e-7


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 16
    max_epochs: int = 50
    seed: int = 0
    early_stop_patience: Optional[int] = 7   # epochs without val-AUC gain; None disables
    class_weights: Optional[tuple[float, ...]] = None

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    def config_hash(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()[:12]


@dataclass
class TrainState:
    step: int = 0
    epoch: int = 0
    running_loss: float = 0.0
    best_val_auc: float = -math.inf


@dataclass
class EpochStats:
    epoch: int
    mean_loss: float
    step_losses: list[float]
    train_accuracy: float
    val_auc: float
    val_accuracy: float


@dataclass
class TrainResult:
    best: Checkpoint
    final: Checkpoint
    history: list[EpochStats]
    state: TrainState


def bce_loss(probs: torch.Tensor, targets: torch.Tensor,
             class_weights: Optional[Sequence[float]] = None) -> torch.Tensor:
    """Mean of -[y ln p + (1-y) ln(1-p)] over batch and outputs.

    Probabilities are clamped into [1e-7, 1 - 1e-7] first, so the loss is
    finite for any finite input.
    """
    if probs.shape != targets.shape:
        raise ShapeMismatch(f"probs {tuple(probs.shape)} vs targets {tuple(targets.shape)}")
    p = probs.clamp(PROB_EPS, 1.0 - PROB_EPS)
    y = targets.to(p.dtype)
    losses = -(y * torch.log(p) + (1.0 - y) * torch.log1p(-p))
    if class_weights is not None:
        w = torch.as_tensor(class_weights, dtype=p.dtype)
        if w.numel() != p.shape[-1]:
            raise ShapeMismatch(f"{w.numel()} class weights for {p.shape[-1]} outputs")
        losses = losses * w
    return losses.mean()


def target_vector(label: Label, head_width: int) -> np.ndarray:
    """Training target: binary COVID flag for width 1, one-hot otherwise."""
    if head_width == 1:
        return np.array([1.0 if label is Label.COVID19 else 0.0], dtype=np.float32)
    index = CLASS_ORDER.index(label)
    if index >= head_width:
        raise ShapeMismatch(
            f"label {label.value} needs output index {index}, head has {head_width}")
    out = np.zeros(head_width, dtype=np.float32)
    out[index] = 1.0
    return out


def _load_batch(manifest: DatasetManifest, records: Sequence[ImageRecord],
                indices: Sequence[int], cfg: PreprocessConfig, mode: Mode,
                seed: int, epoch: int, head_width: int,
                cache: Optional[dict]) -> tuple[torch.Tensor, torch.Tensor]:
    tensors, targets = [], []
    for idx in indices:
        record = records[idx]
        if cache is not None and record.image_id in cache:
            image = cache[record.image_id]
        else:
            image = load_image(manifest.resolve_path(record))
            if cache is not None:
                cache[record.image_id] = image
        rng = np.random.default_rng([seed, epoch, idx])
        tensors.append(run_pipeline(image, mode, rng=rng, cfg=cfg,
                                    source_id=record.image_id).values)
        targets.append(target_vector(record.label, head_width))
    return batch_tensor(tensors), torch.from_numpy(np.stack(targets))


def _make_optimizer(model, cfg: TrainConfig) -> torch.optim.Optimizer:
    params = [p for p in model.parameters() if p.requires_grad]
    return torch.optim.Adam(params, lr=cfg.learning_rate,
                            betas=(cfg.beta1, cfg.beta2), eps=cfg.adam_eps)


def _batch_slices(total: int, batch_size: int) -> list[slice]:
    """Contiguous batch slices; a lone trailing record joins the previous
    batch (train-mode batch statistics need more than one sample)."""
    slices = [slice(start, min(start + batch_size, total))
              for start in range(0, total, batch_size)]
    if len(slices) > 1 and slices[-1].stop - slices[-1].start == 1:
        slices[-2] = slice(slices[-2].start, slices[-1].stop)
        slices.pop()
    return slices


def _metadata(model, cfg: TrainConfig, state: TrainState,
              preprocess_cfg: Optional[PreprocessConfig] = None) -> dict:
    meta = {
        "kind": model.spec.kind,
        "step": state.step,
        "epoch": state.epoch,
        "seed": cfg.seed,
        "config_hash": cfg.config_hash(),
        "best_val_auc": None if state.best_val_auc == -math.inf else state.best_val_auc,
    }
    if preprocess_cfg is not None:
        meta["preprocess"] = asdict(preprocess_cfg)
    return meta


def _validate(model, manifest: DatasetManifest, records, cfg: PreprocessConfig,
              batch_size: int) -> tuple[float, float]:
    positive_map = {label: label is Label.COVID19 for label in Label}
    scored = score_records(model, manifest, records, cfg, positive_map, batch_size)
    _, auc = roc_auc(scored)
    accuracy = sum(e.positive == e.predicted_positive for e in scored) / len(scored)
    return auc, accuracy


def train(model, manifest: DatasetManifest, preprocess_cfg: PreprocessConfig,
          train_cfg: TrainConfig, out_dir: str | Path | None = None,
          start_state: Optional[TrainState] = None,
          optimizer: Optional[torch.optim.Optimizer] = None,
          cache_images: bool = False) -> TrainResult:
    """Optimize on TRAIN, track AUC on VAL, keep the best checkpoint.

    Per-epoch metrics land in the result history (and in ``out_dir`` as a
    line log plus CSV when given).  A non-finite loss aborts with
    DivergenceDetected carrying the last finite checkpoint.  Only parameters
    with gradients update, so the CXR model's frozen extractors never move.
    """
    train_records = manifest.for_split(Split.TRAIN)
    val_records = manifest.for_split(Split.VAL)
    if not train_records:
        raise EmptySplit("manifest has no train records")
    if not val_records:
        raise EmptySplit("manifest has no val records")
    train_records = sorted(train_records, key=lambda r: r.image_id)

    torch.manual_seed(train_cfg.seed)
    optimizer = optimizer or _make_optimizer(model, train_cfg)
    state = start_state or TrainState()
    head_width = model.spec.head_width
    cache: Optional[dict] = {} if cache_images else None

    history: list[EpochStats] = []
    best: Optional[Checkpoint] = None
    last_finite = checkpoint_from_model(
        model, _metadata(model, train_cfg, state, preprocess_cfg), optimizer)
    epochs_since_best = 0
    log_lines: list[str] = []

    for epoch in range(state.epoch, train_cfg.max_epochs):
        model.train()
        order = np.random.default_rng([train_cfg.seed, epoch]).permutation(
            len(train_records))
        step_losses: list[float] = []
        correct = 0
        for batch_slice in _batch_slices(len(order), train_cfg.batch_size):
            indices = order[batch_slice]
            batch, targets = _load_batch(
                manifest, train_records, indices, preprocess_cfg, Mode.TRAIN,
                train_cfg.seed, epoch, head_width, cache)
            probs = model(batch)
            loss = bce_loss(probs, targets, train_cfg.class_weights)
            if not torch.isfinite(loss):
                raise DivergenceDetected(
                    f"non-finite loss at step {state.step}", checkpoint=last_finite)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            state.step += 1
            step_losses.append(float(loss.detach()))
            with torch.no_grad():
                if head_width == 1:
                    correct += int(((probs >= 0.5) == (targets >= 0.5)).sum())
                else:
                    correct += int((probs.argmax(dim=1) == targets.argmax(dim=1)).sum())

        state.epoch = epoch + 1
        state.running_loss = float(np.mean(step_losses))
        val_auc, val_acc = _validate(model, manifest, val_records, preprocess_cfg,
                                     train_cfg.batch_size)
        stats = EpochStats(epoch, state.running_loss, step_losses,
                           correct / len(train_records), val_auc, val_acc)
        history.append(stats)
        log_lines.append(
            f"epoch {epoch} step {state.step} loss {stats.mean_loss:.6f} "
            f"train_acc {stats.train_accuracy:.4f} val_auc {val_auc:.4f} "
            f"val_acc {val_acc:.4f}")

        improved = val_auc > state.best_val_auc
        if improved:
            state.best_val_auc = val_auc
        last_finite = checkpoint_from_model(
            model, _metadata(model, train_cfg, state, preprocess_cfg), optimizer)
        if improved:
            best = last_finite
            epochs_since_best = 0
        else:
            epochs_since_best += 1
            if (train_cfg.early_stop_patience is not None
                    and epochs_since_best >= train_cfg.early_stop_patience):
                break

    if best is None:
        best = last_finite
    if out_dir is not None:
        _write_outputs(Path(out_dir), history, log_lines)
    return TrainResult(best=best, final=last_finite, history=history, state=state)


def _write_outputs(out_dir: Path, history: list[EpochStats], lines: list[str]) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "history.log").write_text("\n".join(lines) + "\n", encoding="utf-8")
    rows = ["epoch,mean_loss,train_accuracy,val_auc,val_accuracy"]
    rows += [f"{h.epoch},{h.mean_loss:.8f},{h.train_accuracy:.6f},"
             f"{h.val_auc:.6f},{h.val_accuracy:.6f}" for h in history]
    (out_dir / "history.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")


def resume(checkpoint: Checkpoint, manifest: DatasetManifest,
           preprocess_cfg: PreprocessConfig, train_cfg: TrainConfig,
           model=None, aux_extractors: Optional[dict] = None,
           out_dir: str | Path | None = None,
           cache_images: bool = False) -> TrainResult:
    """Continue a run from a saved checkpoint (weights + Adam moments + counters).

    When ``model`` is supplied the checkpoint must match its spec
    (VersionMismatch otherwise); by default the model is rebuilt from the
    checkpoint itself.
    """
    if model is None:
        model = model_from_checkpoint(checkpoint)
    else:
        restore_state(checkpoint, model)
    if isinstance(model, DeepCXRNet) and aux_extractors:
        for kind, extractor in aux_extractors.items():
            model.attach_aux(kind, extractor)

    optimizer = _make_optimizer(model, train_cfg)
    load_optimizer_state(checkpoint, model, optimizer)
    meta = checkpoint.metadata
    state = TrainState(
        step=int(meta.get("step", 0)),
        epoch=int(meta.get("epoch", 0)),
        best_val_auc=(meta.get("best_val_auc") if meta.get("best_val_auc") is not None
                      else -math.inf),
    )
    return train(model, manifest, preprocess_cfg, train_cfg, out_dir=out_dir,
                 start_state=state, optimizer=optimizer, cache_images=cache_images)
