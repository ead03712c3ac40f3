"""8-bit RGB PNG loading/saving and edge-mirror padding."""

from __future__ import annotations

import os

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import ImageDepthError, ImageFormatError

_HIGH_DEPTH_MODES = ("I", "I;16", "I;16B", "I;16L", "F")


def load_png(path) -> np.ndarray:
    """Decode an 8-bit RGB or RGBA PNG into a 3xHxW float array in [0, 1]."""
    if not os.path.isfile(path):
        raise FileNotFoundError(f"no such image: {path}")
    try:
        img = Image.open(path)
        img.load()
    except UnidentifiedImageError as exc:
        raise ImageFormatError(f"{path}: not a decodable image") from exc
    if img.mode in _HIGH_DEPTH_MODES:
        raise ImageDepthError(f"{path}: only 8-bit images are supported, got mode {img.mode}")
    if img.mode == "RGBA":
        img = img.convert("RGB")
    if img.mode != "RGB":
        raise ImageFormatError(f"{path}: expected RGB or RGBA, got mode {img.mode}")
    arr = np.asarray(img, dtype=np.float64) / 255.0
    return np.ascontiguousarray(arr.transpose(2, 0, 1))


def save_png(arr: np.ndarray, path) -> None:
    """Clamp to [0, 1], quantize round-half-up to 0..255, write RGB PNG."""
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise ImageFormatError(f"save_png expects a 3xHxW array, got {arr.shape}")
    clipped = np.clip(arr, 0.0, 1.0)
    bytes_ = np.floor(clipped * 255.0 + 0.5).astype(np.uint8)
    Image.fromarray(bytes_.transpose(1, 2, 0), mode="RGB").save(path, format="PNG")


def pad_to_multiple(img: np.ndarray, m: int = 4):
    """Mirror-pad right/bottom so H and W become multiples of m.

    Returns the padded array and the original (H, W) for cropping back.
    The mirror includes the edge pixel, so any size down to 1 works.
    """
    if m < 1:
        raise ValueError("padding multiple must be >= 1")
    h, w = img.shape[-2], img.shape[-1]
    ph = (m - h % m) % m
    pw = (m - w % m) % m
    if ph == 0 and pw == 0:
        return img, (h, w)
    pad = [(0, 0)] * (img.ndim - 2) + [(0, ph), (0, pw)]
    return np.pad(img, pad, mode="symmetric"), (h, w)
