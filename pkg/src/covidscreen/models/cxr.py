"""CXR transfer-learning network.

Three parts: two frozen pretrained extractors contribute a six-vector and a
two-vector of disease likelihoods; the trainable part runs the shared
backbone + pyramid attention, pools to a feature vector, concatenates all
three, and classifies through two fully-connected layers with one sigmoid
output.  Only the third part trains.
"""

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..errors import MissingAuxCheckpoint, ShapeMismatch
from .attention import FeaturePyramidAttention
from .aux import AuxExtractor, AuxKind, aux_forward
from .backbones import build_backbone
from .core import CHEXPERT_DIM, PNEUMONIA_DIM, BINARY_THRESHOLD, ModelSpec, Prediction


class DeepCXRNet(nn.Module):

    def __init__(self, spec: ModelSpec,
                 chexpert: AuxExtractor | None = None,
                 pneumonia: AuxExtractor | None = None):
        super().__init__()
        if spec.kind != "cxr":
            raise ValueError(f"spec kind {spec.kind!r} is not a cxr model")
        self.spec = spec
        self.backbone, channels = build_backbone(spec)
        self.attention = FeaturePyramidAttention(channels, spec.attention_kernels)
        self.main_dim = channels
        self.feature_dim = channels + CHEXPERT_DIM + PNEUMONIA_DIM
        self.fc1 = nn.Linear(self.feature_dim, spec.hidden_width)
        self.fc2 = nn.Linear(spec.hidden_width, 1)
        # Plain dict: the frozen extractors are not submodules, so they stay
        # out of state_dict(), parameters() and therefore out of checkpoints.
        self._aux: dict[AuxKind, AuxExtractor | None] = {
            AuxKind.CHEXPERT6: chexpert,
            AuxKind.PNEUMONIA2: pneumonia,
        }

    def attach_aux(self, which: AuxKind, extractor: AuxExtractor) -> None:
        self._aux[which] = extractor

    def aux_extractor(self, which: AuxKind) -> AuxExtractor:
        extractor = self._aux[which]
        if extractor is None:
            raise MissingAuxCheckpoint(f"no {which.name} extractor attached")
        return extractor

    def _check_input(self, x):
        size = self.spec.input_size
        if x.dim() != 4 or x.size(1) != 3 or x.size(2) != size or x.size(3) != size:
            raise ShapeMismatch(
                f"expected (B, 3, {size}, {size}), got {tuple(x.shape)}")

    def main_features(self, x):
        """Pooled main-branch features, shape (B, channels)."""
        self._check_input(x)
        attended = self.attention(self.backbone(x))
        return torch.flatten(F.adaptive_avg_pool2d(attended, 1), start_dim=1)

    def feature_vector(self, x):
        """Concatenation [main | chexpert-6 | pneumonia-2], shape (B, D+8)."""
        main = self.main_features(x)
        chexpert = aux_forward(x, AuxKind.CHEXPERT6, self._aux[AuxKind.CHEXPERT6])
        pneumonia = aux_forward(x, AuxKind.PNEUMONIA2, self._aux[AuxKind.PNEUMONIA2])
        return torch.cat([main, chexpert.to(main.dtype), pneumonia.to(main.dtype)], dim=1)

    def logits(self, x):
        return self.fc2(torch.relu(self.fc1(self.feature_vector(x))))

    def forward(self, x):
        return torch.sigmoid(self.logits(x))

    @torch.no_grad()
    def predict(self, x):
        was_training = self.training
        self.eval()
        try:
            probs = self.forward(x)
        finally:
            self.train(was_training)
        return [Prediction.binary(p.item()) for p in probs.reshape(-1)]

    def decide(self, probs: torch.Tensor) -> torch.Tensor:
        """Binary labels y in {0,1} from probabilities by 0.5 threshold."""
        return (probs >= BINARY_THRESHOLD).long()
