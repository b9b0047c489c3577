"""Feature pyramid attention over backbone feature maps.

A 1x1-convolved main path is reweighted pixel-wise by an attention map built
from a multi-scale convolution pyramid (stride-2 descents with large-to-small
kernels, lateral convs, then upsample-and-sum back to full resolution), and a
global-pooling branch is broadcast-added on top.  Spatial size and channel
count of the input are preserved.
"""

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..errors import ShapeMismatch


def conv_bn_relu(num_in, num_out, kernel_size, stride=1):
    return nn.Sequential(
        nn.Conv2d(num_in, num_out, kernel_size, stride=stride,
                  padding=kernel_size // 2, bias=False),
        nn.BatchNorm2d(num_out),
        nn.ReLU(inplace=True),
    )


class FeaturePyramidAttention(nn.Module):
    """FPA block preserving (channels, H, W); pyramid kernels default (7, 5, 3)."""

    def __init__(self, channels, kernels=(7, 5, 3)):
        super().__init__()
        if not kernels:
            raise ValueError("need at least one pyramid level")
        self.channels = channels
        self.kernels = tuple(kernels)
        mid = max(channels // 4, 1)

        self.main = conv_bn_relu(channels, channels, 1)
        # no batch norm on 1x1 spatial tensors
        self.global_branch = nn.Sequential(
            nn.Conv2d(channels, channels, 1, bias=False), nn.ReLU(inplace=True))

        downs, laterals = [], []
        for i, k in enumerate(self.kernels):
            downs.append(conv_bn_relu(channels if i == 0 else mid, mid, k, stride=2))
            laterals.append(conv_bn_relu(mid, mid, k))
        self.downs = nn.ModuleList(downs)
        self.laterals = nn.ModuleList(laterals)
        self.out_conv = conv_bn_relu(mid, channels, 1)

    def forward(self, x):
        if x.dim() != 4 or x.size(1) != self.channels:
            raise ShapeMismatch(
                f"expected (B, {self.channels}, H, W), got {tuple(x.shape)}")
        min_side = 2 ** len(self.kernels)
        if x.size(2) < min_side or x.size(3) < min_side:
            raise ShapeMismatch(
                f"spatial dims must be >= {min_side} for {len(self.kernels)} "
                f"pyramid levels, got {tuple(x.shape[2:])}")

        main = self.main(x)

        pooled = F.adaptive_avg_pool2d(x, 1)
        top = self.global_branch(pooled).expand_as(main)

        levels, sizes = [], []
        feat = x
        for down, lateral in zip(self.downs, self.laterals):
            feat = down(feat)
            sizes.append(feat.shape[-2:])
            levels.append(lateral(feat))

        up = levels[-1]
        for i in range(len(levels) - 2, -1, -1):
            up = levels[i] + F.interpolate(up, size=sizes[i], mode="bilinear",
                                           align_corners=False)
        attention = self.out_conv(
            F.interpolate(up, size=x.shape[-2:], mode="bilinear", align_corners=False))

        return main * attention + top
