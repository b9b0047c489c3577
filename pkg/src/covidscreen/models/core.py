"""Model specification and prediction types."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from typing import Optional

from ..errors import ShapeMismatch
from ..manifest import CLASS_ORDER, Label

CHEXPERT_DIM = 6
PNEUMONIA_DIM = 2
BINARY_THRESHOLD = 0.5


@dataclass(frozen=True)
class ModelSpec:
    """Architecture hyperparameters; serialized alongside every checkpoint."""

    kind: str = "ct"                     # "ct" (multi-class) or "cxr" (binary)
    backbone: str = "densenet121"        # pluggable: "densenet121" | "tiny"
    backbone_channels: int = 64          # tiny backbone width (densenet: fixed 1024)
    attention_kernels: tuple[int, ...] = (7, 5, 3)
    head_width: int = 3                  # 3 for the CT task, 1 for CXR
    hidden_width: int = 256
    input_size: int = 256
    pretrained_backbone: bool = True
    head_activation: str = "sigmoid"     # one-vs-all sigmoid; "softmax" optional
    bn_eps: float = 1e-5

    def __post_init__(self) -> None:
        if self.kind not in ("ct", "cxr"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.head_activation not in ("sigmoid", "softmax"):
            raise ValueError(f"unknown head activation {self.head_activation!r}")
        if self.kind == "cxr" and self.head_width != 1:
            raise ValueError("cxr models are binary (head_width must be 1)")
        if self.input_size % 32 != 0:
            raise ValueError("input_size must be a multiple of the backbone stride 32")

    def to_dict(self) -> dict:
        data = asdict(self)
        data["attention_kernels"] = list(self.attention_kernels)
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "ModelSpec":
        data = dict(data)
        data["attention_kernels"] = tuple(data.get("attention_kernels", (7, 5, 3)))
        return cls(**data)


@dataclass(frozen=True)
class Prediction:
    """Per-class probabilities plus the implied decision."""

    probabilities: tuple[float, ...]
    predicted_index: int
    label_name: str
    binary: Optional[int] = None     # only for binary heads: 1 iff p >= 0.5

    @staticmethod
    def multiclass(probs) -> "Prediction":
        probs = tuple(float(p) for p in probs)
        if not all(math.isfinite(p) for p in probs):
            raise ShapeMismatch(f"non-finite probabilities: {probs}")
        index = max(range(len(probs)), key=probs.__getitem__)
        # heads narrower than the full vocabulary cover its leading classes
        if len(probs) <= len(CLASS_ORDER):
            name = CLASS_ORDER[index].value
        else:
            name = f"class_{index}"
        return Prediction(probs, index, name)

    @staticmethod
    def binary(p) -> "Prediction":
        p = float(p)
        if not math.isfinite(p):
            raise ShapeMismatch(f"non-finite probability: {p}")
        positive = int(p >= BINARY_THRESHOLD)
        name = Label.COVID19.value if positive else "non_covid19"
        return Prediction((p,), 0, name, binary=positive)
