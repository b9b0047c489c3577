"""Network architectures, auxiliary extractors and checkpoint handling."""

from .core import (BINARY_THRESHOLD, CHEXPERT_DIM, PNEUMONIA_DIM, ModelSpec,
                   Prediction)
from .attention import FeaturePyramidAttention
from .backbones import build_backbone
from .ct import DeepCTNet
from .cxr import DeepCXRNet
from .aux import AuxExtractor, AuxKind, aux_forward, constant_aux
from .checkpoint import (Checkpoint, checkpoint_from_model, checkpoint_version,
                         load_checkpoint, load_optimizer_state, restore_state,
                         save_checkpoint, state_hash)


def build_model(spec: ModelSpec):
    """Instantiate the network a spec describes (aux extractors attach later)."""
    if spec.kind == "ct":
        return DeepCTNet(spec)
    return DeepCXRNet(spec)


def model_from_checkpoint(checkpoint: Checkpoint):
    """Rebuild a model from a checkpoint without touching pretrained weights."""
    import dataclasses

    spec = dataclasses.replace(checkpoint.model_spec, pretrained_backbone=False)
    model = build_model(spec)
    restore_state(checkpoint, model)
    model.eval()
    return model


__all__ = [
    "BINARY_THRESHOLD", "CHEXPERT_DIM", "PNEUMONIA_DIM", "ModelSpec",
    "Prediction", "FeaturePyramidAttention", "build_backbone", "DeepCTNet",
    "DeepCXRNet", "AuxExtractor", "AuxKind", "aux_forward", "constant_aux",
    "Checkpoint", "checkpoint_from_model", "checkpoint_version",
    "load_checkpoint", "load_optimizer_state", "restore_state",
    "save_checkpoint", "state_hash", "build_model", "model_from_checkpoint",
]
