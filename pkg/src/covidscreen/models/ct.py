"""CT screening network: backbone -> pyramid attention -> batch-norm ->
flatten -> fully-connected head with one sigmoid output per class."""

import torch
import torch.nn as nn

from ..errors import ShapeMismatch
from .attention import FeaturePyramidAttention
from .backbones import build_backbone
from .core import ModelSpec, Prediction


class DeepCTNet(nn.Module):

    def __init__(self, spec: ModelSpec):
        super().__init__()
        if spec.kind != "ct":
            raise ValueError(f"spec kind {spec.kind!r} is not a ct model")
        self.spec = spec
        self.backbone, channels = build_backbone(spec)
        self.attention = FeaturePyramidAttention(channels, spec.attention_kernels)
        self.post_norm = nn.BatchNorm2d(channels, eps=spec.bn_eps)
        grid = spec.input_size // 32
        self.flat_dim = channels * grid * grid
        # hidden_width 0 selects the single fully-connected layer variant
        self.hidden = (nn.Linear(self.flat_dim, spec.hidden_width)
                       if spec.hidden_width > 0 else None)
        head_in = spec.hidden_width if spec.hidden_width > 0 else self.flat_dim
        self.output = nn.Linear(head_in, spec.head_width)

    def _check_input(self, x):
        size = self.spec.input_size
        if x.dim() != 4 or x.size(1) != 3 or x.size(2) != size or x.size(3) != size:
            raise ShapeMismatch(
                f"expected (B, 3, {size}, {size}), got {tuple(x.shape)}")

    def backbone_forward(self, x):
        self._check_input(x)
        return self.backbone(x)

    def attended_features(self, x):
        return self.attention(self.backbone_forward(x))

    def head_logits(self, feature_map):
        normed = self.post_norm(feature_map)
        flat = torch.flatten(normed, start_dim=1)
        if flat.size(1) != self.flat_dim:
            raise ShapeMismatch(
                f"head expected {self.flat_dim} features, got {flat.size(1)}")
        if self.hidden is None:
            return self.output(flat)
        return self.output(torch.relu(self.hidden(flat)))

    def logits(self, x):
        return self.head_logits(self.attended_features(x))

    def activate(self, logits):
        if self.spec.head_activation == "softmax":
            return torch.softmax(logits, dim=1)
        return torch.sigmoid(logits)

    def forward(self, x):
        return self.activate(self.logits(x))

    @torch.no_grad()
    def predict(self, x):
        """Eval-mode probabilities and argmax labels for a batch."""
        was_training = self.training
        self.eval()
        try:
            probs = self.forward(x)
        finally:
            self.train(was_training)
        return [Prediction.multiclass(row.tolist()) for row in probs]
