"""8-bit sRGB PNG input/output for float images in [0, 1]."""

from __future__ import annotations

import numpy as np
from PIL import Image as PILImage


class ImageDecodeError(ValueError):
    """Raised when a file cannot be decoded as an RGB image."""


def load_image(path) -> np.ndarray:
    """Decode to an (H, W, 3) float32 array in [0, 1]."""
    try:
        with PILImage.open(path) as im:
            rgb = im.convert("RGB")
            return np.asarray(rgb, dtype=np.float32) / 255.0
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise ImageDecodeError(f"cannot decode image {path}: {exc}") from exc


def quantize(img: np.ndarray) -> np.ndarray:
    """Round a float image in [0, 1] to uint8; deterministic half-up rounding."""
    return np.clip(np.floor(img * 255.0 + 0.5), 0, 255).astype(np.uint8)


def save_image(img: np.ndarray, path) -> None:
    """Write an (H, W, 3) or (H, W) float image in [0, 1] as 8-bit PNG."""
    PILImage.fromarray(quantize(img)).save(path, format="PNG")


def chw(img: np.ndarray) -> np.ndarray:
    """(H, W, 3) -> (3, H, W)."""
    return np.ascontiguousarray(img.transpose(2, 0, 1))


def hwc(img: np.ndarray) -> np.ndarray:
    """(3, H, W) -> (H, W, 3)."""
    return np.ascontiguousarray(img.transpose(1, 2, 0))
