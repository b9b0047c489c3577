"""Image preprocessing pipeline.

Five steps, applied in order: seeded augmentation (training only), per-channel
histogram equalization, bilinear resize to the target size, 3x3 Gaussian
smoothing, and per-image standardization.  Every step is pure given its
inputs, so the pipeline is reproducible bit-for-bit from (image, seed,
config).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from enum import Enum
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import UndecodableImage


class Mode(Enum):
    TRAIN = "train"
    EVAL = "eval"


@dataclass(frozen=True)
class PreprocessConfig:
    rotation_range_deg: tuple[float, float] = (-15.0, 15.0)
    translation_range_frac: tuple[float, float] = (-0.05, 0.05)
    target_size: tuple[int, int, int] = (256, 256, 3)
    blur_window: int = 3
    blur_sigma: Optional[float] = None   # None: library default for the window
    augment_enabled: bool = True
    equalize_on_luminance: bool = False
    fill_value: int = 0                  # exposed border fill, black background

    def __post_init__(self) -> None:
        if self.blur_window < 1 or self.blur_window % 2 == 0:
            raise ValueError("blur_window must be an odd integer >= 1")
        if any(d <= 0 for d in self.target_size):
            raise ValueError("target_size dimensions must be positive")
        for lo, hi in (self.rotation_range_deg, self.translation_range_frac):
            if lo > hi:
                raise ValueError("interval bounds must be ordered (lo <= hi)")

    @classmethod
    def from_dict(cls, data: dict) -> "PreprocessConfig":
        known = {f.name for f in fields(cls)}
        kwargs = {k: v for k, v in data.items() if k in known}
        for key in ("rotation_range_deg", "translation_range_frac", "target_size"):
            if key in kwargs and isinstance(kwargs[key], (list, tuple)):
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)


@dataclass
class NormalizedTensor:
    """Standardized pixel tensor plus its provenance."""

    values: np.ndarray            # H x W x C float32
    source_id: Optional[str] = None
    degenerate: bool = False      # zero-variance input, values are all zeros


def load_image(path: str | Path) -> np.ndarray:
    """Decode a raster file to an RGB uint8 array (H x W x 3)."""
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("RGB"), dtype=np.uint8)
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise UndecodableImage(f"cannot decode {path}: {exc}") from exc


def _as_channels(img: np.ndarray) -> np.ndarray:
    if img.ndim == 2:
        return img[:, :, None]
    if img.ndim == 3 and img.shape[2] in (1, 3):
        return img
    raise ValueError(f"expected HxW or HxWx{{1,3}} image, got shape {img.shape}")


# --- step 1: augmentation -------------------------------------------------

def apply_affine(img: np.ndarray, angle_deg: float,
                 shift_px: tuple[float, float], fill: float = 0.0) -> np.ndarray:
    """Rotate about the image center then translate, bilinear resampling.

    ``shift_px`` is (dx, dy) in pixels; exposed regions take ``fill``.  Output
    dimensions equal input dimensions.  Integer shifts with a zero angle move
    content exactly, and the identity transform reproduces the input.
    """
    arr = _as_channels(np.asarray(img))
    h, w = arr.shape[:2]
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    theta = math.radians(angle_deg)
    cos_t, sin_t = math.cos(theta), math.sin(theta)

    oy, ox = np.meshgrid(np.arange(h, dtype=np.float64),
                         np.arange(w, dtype=np.float64), indexing="ij")
    # Invert "rotate about center, then shift": undo the shift, rotate back.
    qx = ox - shift_px[0] - cx
    qy = oy - shift_px[1] - cy
    sx = cos_t * qx + sin_t * qy + cx
    sy = -sin_t * qx + cos_t * qy + cy

    x0 = np.floor(sx)
    y0 = np.floor(sy)
    wx = sx - x0
    wy = sy - y0

    out = np.zeros((h, w, arr.shape[2]), dtype=np.float64)
    weights = ((1 - wx) * (1 - wy), wx * (1 - wy), (1 - wx) * wy, wx * wy)
    corners = ((y0, x0), (y0, x0 + 1), (y0 + 1, x0), (y0 + 1, x0 + 1))
    for weight, (ys, xs) in zip(weights, corners):
        inside = (ys >= 0) & (ys < h) & (xs >= 0) & (xs < w)
        yi = np.clip(ys, 0, h - 1).astype(np.intp)
        xi = np.clip(xs, 0, w - 1).astype(np.intp)
        values = np.where(inside[:, :, None], arr[yi, xi].astype(np.float64), fill)
        out += weight[:, :, None] * values

    result = np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)
    return result if img.ndim == 3 else result[:, :, 0]


def augment(img: np.ndarray, rng: np.random.Generator,
            cfg: PreprocessConfig) -> np.ndarray:
    """Random rotation and translation drawn from the configured ranges.

    Draw order is fixed (angle, x-fraction, y-fraction) so a given stream
    state always produces the same transform.
    """
    h, w = img.shape[:2]
    angle = rng.uniform(*cfg.rotation_range_deg)
    fx = rng.uniform(*cfg.translation_range_frac)
    fy = rng.uniform(*cfg.translation_range_frac)
    return apply_affine(img, angle, (fx * w, fy * h), fill=cfg.fill_value)


# --- step 2: histogram equalization ---------------------------------------

def _equalize_channel(channel: np.ndarray, lut_source: np.ndarray) -> np.ndarray:
    hist = np.bincount(lut_source.ravel(), minlength=256)
    cdf = hist.cumsum()
    cdf_min = cdf[0]               # the naive minimum of the cumulative histogram
    denom = cdf[-1] - cdf_min
    if denom == 0:                 # every pixel at level 0: nothing to stretch
        return channel.copy()
    lut = np.floor(255.0 * (cdf - cdf_min) / denom + 0.5).astype(np.uint8)
    return lut[channel]


def equalize_histogram(img: np.ndarray, *, on_luminance: bool = False) -> np.ndarray:
    """Contrast adjustment by the classic CDF remap.

    out(v) = round(255 * (cdf(v) - cdf_min) / (N - cdf_min)) per channel,
    where N is the pixel count and cdf_min the cumulative count at level 0.
    With ``on_luminance`` a single remap is built from the Rec. 601 luma and
    applied to every channel, keeping hue relationships intact.
    """
    arr = _as_channels(np.asarray(img))
    if arr.dtype != np.uint8:
        if not np.issubdtype(arr.dtype, np.integer):
            raise ValueError("histogram equalization requires integer intensities")
        arr = np.clip(arr, 0, 255).astype(np.uint8)

    if on_luminance and arr.shape[2] == 3:
        luma = np.floor(0.299 * arr[:, :, 0] + 0.587 * arr[:, :, 1]
                        + 0.114 * arr[:, :, 2] + 0.5).astype(np.uint8)
        out = np.stack([_equalize_channel(arr[:, :, c], luma) for c in range(3)], axis=2)
    else:
        out = np.stack([_equalize_channel(arr[:, :, c], arr[:, :, c])
                        for c in range(arr.shape[2])], axis=2)
    return out if img.ndim == 3 else out[:, :, 0]


# --- step 3: resize --------------------------------------------------------

def resize(img: np.ndarray, target_size: tuple[int, int, int]) -> np.ndarray:
    """Bilinear rescale straight to ``target_size`` (H, W, C), float64 output.

    Sampling uses half-pixel-aligned centers, so an exact 2x downscale of a
    pixel grid averages each 2x2 block.  Single-channel inputs are replicated
    across the requested channel count; aspect ratio is not preserved.
    """
    th, tw, tc = target_size
    arr = _as_channels(np.asarray(img)).astype(np.float64)
    h, w, c = arr.shape

    def axis_coords(out_n: int, in_n: int) -> np.ndarray:
        scale = in_n / out_n
        coords = (np.arange(out_n, dtype=np.float64) + 0.5) * scale - 0.5
        return np.clip(coords, 0.0, in_n - 1.0)

    ys = axis_coords(th, h)
    xs = axis_coords(tw, w)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0)[:, None, None]
    wx = (xs - x0)[None, :, None]

    top = arr[y0][:, x0] * (1 - wx) + arr[y0][:, x1] * wx
    bottom = arr[y1][:, x0] * (1 - wx) + arr[y1][:, x1] * wx
    out = top * (1 - wy) + bottom * wy

    if c == 1 and tc > 1:
        out = np.repeat(out, tc, axis=2)
    elif c != tc:
        raise ValueError(f"cannot map {c} channels onto {tc}")
    return out


# --- step 4: Gaussian smoothing --------------------------------------------

def gaussian_kernel_1d(window: int, sigma: Optional[float] = None) -> np.ndarray:
    """Normalized 1-D Gaussian taps.

    Without an explicit sigma the 3-tap kernel is the classic binomial
    [1, 2, 1] / 4 approximation (equivalently sigma = 1/sqrt(2 ln 2) ~ 0.85,
    the small-kernel convention most image libraries substitute at their
    nominal 0.8 default); wider windows sample exp(-x^2 / (2 sigma^2)) with
    sigma = 0.3 * ((window - 1) / 2 - 1) + 0.8.
    """
    if window < 1 or window % 2 == 0:
        raise ValueError("window must be an odd integer >= 1")
    if sigma is None:
        if window == 3:
            return np.array([0.25, 0.5, 0.25], dtype=np.float64)
        sigma = 0.3 * ((window - 1) * 0.5 - 1) + 0.8
    offsets = np.arange(window, dtype=np.float64) - (window - 1) / 2
    weights = np.exp(-(offsets ** 2) / (2.0 * sigma * sigma))
    return weights / weights.sum()


def gaussian_blur(img: np.ndarray, window: int = 3,
                  sigma: Optional[float] = None) -> np.ndarray:
    """Separable Gaussian smoothing with reflective borders.

    The kernel is normalized (weights sum to 1), so constant images pass
    through unchanged and total intensity is preserved away from borders.
    """
    kernel = gaussian_kernel_1d(window, sigma)
    arr = _as_channels(np.asarray(img)).astype(np.float64)
    pad = window // 2

    padded = np.pad(arr, ((pad, pad), (0, 0), (0, 0)), mode="symmetric")
    rows = sum(kernel[k] * padded[k:k + arr.shape[0]] for k in range(window))
    padded = np.pad(rows, ((0, 0), (pad, pad), (0, 0)), mode="symmetric")
    out = sum(kernel[k] * padded[:, k:k + arr.shape[1]] for k in range(window))
    return out if img.ndim == 3 else out[:, :, 0]


# --- step 5: standardization ------------------------------------------------

def normalize(img: np.ndarray, source_id: Optional[str] = None) -> NormalizedTensor:
    """Subtract the per-image mean and divide by the population std.

    A zero-variance image cannot be standardized; it yields an all-zeros
    tensor with the degenerate flag set instead of dividing by zero.
    """
    arr = _as_channels(np.asarray(img)).astype(np.float64)
    mean = arr.mean()
    std = arr.std()
    if std == 0.0:
        return NormalizedTensor(np.zeros(arr.shape, dtype=np.float32),
                                source_id, degenerate=True)
    return NormalizedTensor(((arr - mean) / std).astype(np.float32), source_id)


# --- composition ------------------------------------------------------------

def run_pipeline(img: np.ndarray, mode: Mode,
                 rng: Optional[np.random.Generator] = None,
                 cfg: PreprocessConfig = PreprocessConfig(),
                 source_id: Optional[str] = None) -> NormalizedTensor:
    """Run all steps in order; augmentation only in TRAIN mode.

    TRAIN mode requires a seeded generator; the stream must not be shared
    across concurrent calls.  Output shape is exactly ``cfg.target_size``
    whatever the input shape.
    """
    out = np.asarray(img)
    if mode is Mode.TRAIN and cfg.augment_enabled:
        if rng is None:
            raise ValueError("TRAIN mode needs a seeded random generator")
        out = augment(out, rng, cfg)
    out = equalize_histogram(out, on_luminance=cfg.equalize_on_luminance)
    out = resize(out, cfg.target_size)
    out = gaussian_blur(out, cfg.blur_window, cfg.blur_sigma)
    return normalize(out, source_id)
