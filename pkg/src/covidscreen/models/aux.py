"""Frozen auxiliary feature extractors for the transfer-learning CXR model.

The extractors are black boxes: image batch in, probability vector out.  One
produces six disease likelihoods, the other a two-way pneumonia likelihood.
Their parameters are never updated by downstream training.
"""

from __future__ import annotations

from enum import Enum
from typing import Callable, Optional

import torch
import torch.nn as nn

from ..errors import MissingAuxCheckpoint, ShapeMismatch


class AuxKind(Enum):
    CHEXPERT6 = 6
    PNEUMONIA2 = 2

    @property
    def dim(self) -> int:
        return self.value


class AuxExtractor:
    """Wraps a module or callable as a frozen probability extractor."""

    def __init__(self, fn: Callable[[torch.Tensor], torch.Tensor], dim: int,
                 name: str = "aux"):
        self.fn = fn
        self.dim = dim
        self.name = name
        if isinstance(fn, nn.Module):
            fn.eval()
            for p in fn.parameters():
                p.requires_grad_(False)

    def __call__(self, batch: torch.Tensor) -> torch.Tensor:
        with torch.no_grad():
            out = self.fn(batch)
        if out.dim() != 2 or out.size(1) != self.dim:
            raise ShapeMismatch(
                f"{self.name}: expected (B, {self.dim}), got {tuple(out.shape)}")
        return out.clamp(0.0, 1.0).detach()

    def parameters(self):
        if isinstance(self.fn, nn.Module):
            return list(self.fn.parameters())
        return []


def constant_aux(values, name: str = "constant-aux") -> AuxExtractor:
    """Stub extractor returning the same vector for every image."""
    vec = torch.as_tensor(values, dtype=torch.float32).reshape(1, -1)

    def fn(batch: torch.Tensor) -> torch.Tensor:
        return vec.expand(batch.size(0), vec.size(1)).clone()

    return AuxExtractor(fn, vec.size(1), name)


def aux_forward(batch: torch.Tensor, which: AuxKind,
                extractor: Optional[AuxExtractor]) -> torch.Tensor:
    """Run one auxiliary extractor, enforcing its output dimension."""
    if extractor is None:
        raise MissingAuxCheckpoint(f"no {which.name} extractor attached")
    if extractor.dim != which.dim:
        raise ShapeMismatch(
            f"{which.name} expects dim {which.dim}, extractor has {extractor.dim}")
    return extractor(batch)
