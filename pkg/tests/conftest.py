"""Shared fixtures: synthetic images, datasets on disk, tiny model specs."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest
import torch
from PIL import Image

from covidscreen.manifest import (DatasetManifest, ImageRecord, Label,
                                  Modality, Split, save_manifest)
from covidscreen.models import (ModelSpec, build_model, checkpoint_from_model,
                                save_checkpoint)


def class_image(rng: np.random.Generator, label: Label, size: int = 64) -> np.ndarray:
    """Synthetic, easily separable class patterns with mild noise."""
    img = rng.integers(0, 40, (size, size, 3), dtype=np.uint8).astype(np.float64)
    yy, xx = np.mgrid[0:size, 0:size]
    if label is Label.COVID19:
        disc = (yy - size / 2) ** 2 + (xx - size / 2) ** 2 < (size / 4) ** 2
        img[disc] += 180
    elif label is Label.OTHER_PNEUMONIA:
        img[(yy // 8) % 2 == 0] += 140
    else:
        img[:, : size // 2] += 160
    return np.clip(img, 0, 255).astype(np.uint8)


def write_dataset(root: Path, counts: dict[Split, dict[Label, int]],
                  size: int = 64, seed: int = 0,
                  modality: Modality = Modality.CT) -> Path:
    """Write PNGs + a manifest with split assignments; returns manifest path."""
    rng = np.random.default_rng(seed)
    records, splits = [], {}
    for split, per_class in counts.items():
        for label, count in per_class.items():
            for i in range(count):
                image_id = f"{split.value}_{label.value}_{i}"
                rel = f"{label.value}/{image_id}.png"
                path = root / rel
                path.parent.mkdir(parents=True, exist_ok=True)
                Image.fromarray(class_image(rng, label, size)).save(path)
                records.append(ImageRecord(image_id, rel, label,
                                           patient_id=f"p{image_id}",
                                           modality=modality,
                                           width=size, height=size, bit_depth=24))
                splits[image_id] = split
    manifest_path = root / "manifest.csv"
    save_manifest(DatasetManifest(records, splits, root=root), manifest_path)
    return manifest_path


def tiny_ct_spec(**overrides) -> ModelSpec:
    base = dict(kind="ct", backbone="tiny", backbone_channels=16,
                head_width=3, hidden_width=32, input_size=256,
                pretrained_backbone=False)
    base.update(overrides)
    return ModelSpec(**base)


def tiny_cxr_spec(**overrides) -> ModelSpec:
    base = dict(kind="cxr", backbone="tiny", backbone_channels=16,
                head_width=1, hidden_width=32, input_size=256,
                pretrained_backbone=False)
    base.update(overrides)
    return ModelSpec(**base)


def smoke_spec(**overrides) -> ModelSpec:
    """128-input two-level-pyramid spec for fast training smoke tests."""
    base = dict(kind="ct", backbone="tiny", backbone_channels=32,
                head_width=2, hidden_width=32, input_size=128,
                attention_kernels=(7, 5), pretrained_backbone=False)
    base.update(overrides)
    return ModelSpec(**base)


@pytest.fixture(scope="session")
def tiny_ct_checkpoint(tmp_path_factory) -> Path:
    torch.manual_seed(1234)
    model = build_model(tiny_ct_spec())
    path = tmp_path_factory.mktemp("ckpt") / "tiny_ct.ckpt"
    save_checkpoint(checkpoint_from_model(model, {"note": "hermetic random init"}),
                    path)
    return path


@pytest.fixture
def two_class_manifest(tmp_path) -> Path:
    return write_dataset(tmp_path / "data", {
        Split.TRAIN: {Label.COVID19: 10, Label.OTHER_PNEUMONIA: 10},
        Split.VAL: {Label.COVID19: 2, Label.OTHER_PNEUMONIA: 2},
        Split.TEST: {Label.COVID19: 3, Label.OTHER_PNEUMONIA: 3},
    })


def png_bytes(array: np.ndarray) -> bytes:
    import io

    buffer = io.BytesIO()
    Image.fromarray(array).save(buffer, format="PNG")
    return buffer.getvalue()
