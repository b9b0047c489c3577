"""Class-discriminative heatmaps by gradient-weighted activation mapping.

The target layer is the pyramid-attention output (the last spatially
resolved representation).  Channel weights are the spatial means of the
class-score gradient; the weighted activation sum is rectified, min-max
normalized per image, and bilinearly upsampled to the model's input size.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import matplotlib
import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image

from .errors import InvalidClass, ShapeMismatch
from .manifest import CLASS_ORDER

COLORMAP = "jet"


@dataclass
class CamResult:
    heatmap: np.ndarray          # feature-grid resolution, values in [0, 1]
    upsampled: np.ndarray        # model-input resolution, values in [0, 1]
    target_class: int
    source_id: Optional[str] = None
    degenerate: bool = False     # weighted sum was entirely non-positive


def class_index(model, target) -> int:
    """Resolve a class name/Label/index against the model's head."""
    width = model.spec.head_width
    if isinstance(target, str):
        names = [label.value for label in CLASS_ORDER[:width]] if width == 3 else []
        lowered = target.lower()
        if lowered in names:
            return names.index(lowered)
        if lowered in ("covid", "covid19"):
            return 0
        raise InvalidClass(f"unknown class name {target!r}")
    index = int(getattr(target, "value", target)) if not isinstance(target, int) else target
    if not 0 <= index < width:
        raise InvalidClass(f"class index {index} outside [0, {width})")
    return index


def grad_cam(model, image: torch.Tensor, target_class,
             source_id: Optional[str] = None) -> CamResult:
    """Heatmap for one image (C, H, W) or a singleton batch.

    Model weights are untouched; the gradient flows only from the target
    class score, so other classes' scores are irrelevant.  When the weighted
    activation sum is entirely non-positive the result is an all-zero map
    with the degenerate flag set.
    """
    index = class_index(model, target_class)
    batch = image.unsqueeze(0) if image.dim() == 3 else image
    if batch.size(0) != 1:
        raise ShapeMismatch(f"grad_cam expects a single image, got batch {batch.size(0)}")

    model.eval()
    captured: dict[str, torch.Tensor] = {}

    def hook(_module, _inputs, output):
        captured["activations"] = output

    handle = model.attention.register_forward_hook(hook)
    try:
        with torch.enable_grad():
            logits = model.logits(batch)
            activations = captured["activations"]
            score = logits[0, index]
            grads = torch.autograd.grad(score, activations, retain_graph=False)[0]
    finally:
        handle.remove()

    weights = grads.mean(dim=(2, 3), keepdim=True)          # alpha_k
    weighted = (weights * activations).sum(dim=1)            # (1, H', W')
    cam = torch.relu(weighted)[0].detach()

    peak = float(cam.max())
    if peak <= 0.0:
        grid = np.zeros(tuple(cam.shape), dtype=np.float32)
        size = model.spec.input_size
        return CamResult(grid, np.zeros((size, size), dtype=np.float32),
                         index, source_id, degenerate=True)

    low = float(cam.min())
    normalized = (cam - low) / (peak - low) if peak > low else cam / peak
    size = model.spec.input_size
    upsampled = F.interpolate(normalized[None, None], size=(size, size),
                              mode="bilinear", align_corners=False)[0, 0]
    return CamResult(normalized.numpy().astype(np.float32),
                     upsampled.numpy().astype(np.float32),
                     index, source_id)


def colormap_heatmap(values: np.ndarray) -> np.ndarray:
    """Map [0,1] values through the fixed colormap to uint8 RGB."""
    mapped = matplotlib.colormaps[COLORMAP](np.clip(values, 0.0, 1.0))[..., :3]
    return np.floor(mapped * 255.0 + 0.5).astype(np.uint8)


def render_overlay(image: np.ndarray, cam: CamResult, alpha: float) -> np.ndarray:
    """Alpha-blend the color-mapped heatmap over the source image.

    alpha 0 reproduces the source exactly; alpha 1 is the pure color-mapped
    heatmap.  The heatmap is resized (bilinearly) to the image's resolution
    when the two differ, so overlays can be rendered at native size.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    if image.ndim == 2:
        image = np.repeat(image[:, :, None], 3, axis=2)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ShapeMismatch(f"expected HxWx3 image, got {image.shape}")

    heat = cam.upsampled
    if heat.shape != image.shape[:2]:
        from .preprocess import resize
        heat = resize(heat, (image.shape[0], image.shape[1], 1))[:, :, 0]
        heat = np.clip(heat, 0.0, 1.0)

    if alpha == 0.0:
        return image.astype(np.uint8).copy()
    colored = colormap_heatmap(heat).astype(np.float64)
    blended = (1.0 - alpha) * image.astype(np.float64) + alpha * colored
    return np.clip(np.floor(blended + 0.5), 0, 255).astype(np.uint8)


def save_overlay(path: str | Path, overlay: np.ndarray) -> None:
    """Write the overlay as a PNG (content-deterministic encoding)."""
    Image.fromarray(overlay, mode="RGB").save(path, format="PNG")
