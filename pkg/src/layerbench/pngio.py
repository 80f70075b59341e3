"""8-bit PNG encoding/decoding for images, RGBA layers, and binary masks.

Float channels in [0, 1] map to bytes via round(v * 255) and back via v / 255,
so a save/load round trip is bit-lossless at 8-bit resolution.
"""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

MASK_THRESHOLD = 128


def _to_u8(arr: np.ndarray) -> np.ndarray:
    return np.rint(np.asarray(arr, dtype=np.float64) * 255.0).astype(np.uint8)


def rgb_to_png_bytes(img: np.ndarray) -> bytes:
    buf = io.BytesIO()
    PILImage.fromarray(_to_u8(img), mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def png_bytes_to_rgb(data: bytes) -> np.ndarray:
    with PILImage.open(io.BytesIO(data)) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    return arr / 255.0


def rgba_to_png_bytes(rgb: np.ndarray, alpha: np.ndarray) -> bytes:
    stacked = np.concatenate([_to_u8(rgb), _to_u8(alpha)[:, :, None]], axis=2)
    buf = io.BytesIO()
    PILImage.fromarray(stacked, mode="RGBA").save(buf, format="PNG")
    return buf.getvalue()


def png_bytes_to_rgba(data: bytes) -> tuple[np.ndarray, np.ndarray]:
    with PILImage.open(io.BytesIO(data)) as im:
        arr = np.asarray(im.convert("RGBA"), dtype=np.float64)
    return arr[:, :, :3] / 255.0, arr[:, :, 3] / 255.0


def mask_to_png_bytes(mask: np.ndarray) -> bytes:
    buf = io.BytesIO()
    PILImage.fromarray(_to_u8(mask), mode="L").save(buf, format="PNG")
    return buf.getvalue()


def png_bytes_to_mask(data: bytes) -> np.ndarray:
    """Decode a grayscale PNG to a {0, 1} mask, thresholding at >= 128."""
    with PILImage.open(io.BytesIO(data)) as im:
        arr = np.asarray(im.convert("L"))
    return (arr >= MASK_THRESHOLD).astype(np.float64)


def save_rgb(path: str | Path, img: np.ndarray) -> None:
    Path(path).write_bytes(rgb_to_png_bytes(img))


def load_rgb(path: str | Path) -> np.ndarray:
    return png_bytes_to_rgb(Path(path).read_bytes())


def save_rgba(path: str | Path, rgb: np.ndarray, alpha: np.ndarray) -> None:
    Path(path).write_bytes(rgba_to_png_bytes(rgb, alpha))


def load_rgba(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    return png_bytes_to_rgba(Path(path).read_bytes())


def save_mask(path: str | Path, mask: np.ndarray) -> None:
    Path(path).write_bytes(mask_to_png_bytes(mask))


def load_mask(path: str | Path) -> np.ndarray:
    return png_bytes_to_mask(Path(path).read_bytes())
