"""Backbone feature extractors (stride 32)."""

import torch.nn as nn

from .attention import conv_bn_relu
from .core import ModelSpec

DENSENET_CHANNELS = 1024


class TinyBackbone(nn.Module):
    """Five stride-2 conv blocks; small enough for CPU test runs."""

    def __init__(self, out_channels=64):
        super().__init__()
        widths = [16, 32, out_channels, out_channels, out_channels]
        blocks, previous = [], 3
        for width in widths:
            blocks.append(conv_bn_relu(previous, width, 3, stride=2))
            previous = width
        self.blocks = nn.Sequential(*blocks)
        self.out_channels = out_channels

    def forward(self, x):
        return self.blocks(x)


def build_backbone(spec: ModelSpec):
    """Return (module, out_channels) for the spec's backbone choice."""
    if spec.backbone == "densenet121":
        from torchvision.models import densenet121, DenseNet121_Weights
        weights = DenseNet121_Weights.DEFAULT if spec.pretrained_backbone else None
        return densenet121(weights=weights).features, DENSENET_CHANNELS
    if spec.backbone == "tiny":
        return TinyBackbone(spec.backbone_channels), spec.backbone_channels
    raise ValueError(f"unknown backbone {spec.backbone!r}")
