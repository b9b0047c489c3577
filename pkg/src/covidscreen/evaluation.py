"""Model-driven evaluation over manifest splits."""

from __future__ import annotations

from typing import Mapping, Optional, Sequence

import numpy as np
import torch

from .errors import EmptySplit, LabelMappingError
from .manifest import CLASS_ORDER, DatasetManifest, ImageRecord, Label, Split
from .metrics import EvalReport, ScoredExample, report_from_scored
from .models import DeepCTNet, Prediction
from .preprocess import Mode, PreprocessConfig, load_image, run_pipeline

COVID_INDEX = CLASS_ORDER.index(Label.COVID19)


def pipeline_config_for(checkpoint) -> PreprocessConfig:
    """The preprocessing a checkpoint was trained with.

    Falls back to the defaults sized to the model's input when the
    checkpoint predates config embedding.
    """
    stored = checkpoint.metadata.get("preprocess")
    if stored:
        return PreprocessConfig.from_dict(stored)
    size = checkpoint.model_spec.input_size
    return PreprocessConfig(target_size=(size, size, 3))


def batch_tensor(tensors: Sequence[np.ndarray]) -> torch.Tensor:
    """Stack HxWxC float arrays into a (B, C, H, W) torch batch."""
    stacked = np.stack([np.transpose(t, (2, 0, 1)) for t in tensors])
    return torch.from_numpy(np.ascontiguousarray(stacked)).float()


def score_records(model, manifest: DatasetManifest, records: Sequence[ImageRecord],
                  cfg: PreprocessConfig, positive_map: Mapping[Label, bool],
                  batch_size: int = 8) -> list[ScoredExample]:
    """Run the eval pipeline + forward pass and score every record.

    ``positive_map`` states which true labels count as COVID-positive; a label
    absent from the map is an error, never a silent misalignment.
    """
    for record in records:
        if record.label not in positive_map:
            raise LabelMappingError(
                f"label {record.label.value!r} has no entry in the label map")

    is_ct = isinstance(model, DeepCTNet)
    model.eval()
    scored: list[ScoredExample] = []
    for start in range(0, len(records), batch_size):
        chunk = records[start:start + batch_size]
        tensors = []
        for record in chunk:
            image = load_image(manifest.resolve_path(record))
            tensors.append(run_pipeline(image, Mode.EVAL, cfg=cfg,
                                        source_id=record.image_id).values)
        with torch.no_grad():
            probs = model(batch_tensor(tensors))
        for record, row in zip(chunk, probs):
            if is_ct:
                prediction = Prediction.multiclass(row.tolist())
                score = float(row[COVID_INDEX])
            else:
                prediction = Prediction.binary(row.reshape(()).item())
                score = prediction.probabilities[0]
            scored.append(ScoredExample(
                image_id=record.image_id,
                true_label=record.label,
                score=score,
                predicted_label=prediction.label_name,
                positive=positive_map[record.label],
            ))
    return scored


def evaluate(model, manifest: DatasetManifest, mode: str = "ct3",
             cfg: PreprocessConfig = PreprocessConfig(),
             split: Split = Split.TEST, batch_size: int = 8,
             model_version: Optional[str] = None) -> EvalReport:
    """Full report over one split; COVID is the positive class.

    CT mode additionally reports the 3x3 argmax confusion matrix and
    macro-averaged per-class metrics.
    """
    if mode not in ("ct3", "cxr_binary"):
        raise ValueError(f"unknown eval mode {mode!r}")
    records = manifest.for_split(split)
    if not records:
        raise EmptySplit(f"manifest has no {split.value} records")
    positive_map = {label: label is Label.COVID19 for label in Label}
    scored = score_records(model, manifest, records, cfg, positive_map, batch_size)
    return report_from_scored(scored, mode, model_version)


def cross_dataset_eval(model, manifest: DatasetManifest,
                       positive_map: Mapping[Label, bool],
                       cfg: PreprocessConfig = PreprocessConfig(),
                       split: Split = Split.TEST, batch_size: int = 8,
                       model_version: Optional[str] = None) -> EvalReport:
    """Evaluate a trained model on an external dataset without fine-tuning.

    The caller supplies the COVID/non-COVID label mapping explicitly; image
    validation is the lenient (decodable-only) regime, matching heterogeneous
    external collections.
    """
    records = manifest.for_split(split)
    if not records:
        raise EmptySplit(f"manifest has no {split.value} records")
    scored = score_records(model, manifest, records, cfg, positive_map, batch_size)
    mode = "ct3" if isinstance(model, DeepCTNet) else "cxr_binary"
    return report_from_scored(scored, mode, model_version)
