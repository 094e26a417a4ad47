"""8-bit image files: PGM/PPM (canonical, lossless) and PNG."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

_FORMATS = {".pgm": "PPM", ".ppm": "PPM", ".pnm": "PPM", ".png": "PNG"}


def _format_for(path) -> str:
    ext = Path(path).suffix.lower()
    if ext not in _FORMATS:
        raise ValueError(f"unsupported image extension {ext!r}; use .pgm, .ppm or .png")
    return _FORMATS[ext]


def read_image(path) -> np.ndarray:
    """uint8 array, (H, W) for gray files and (H, W, 3) for color ones."""
    with Image.open(path) as im:
        if im.mode.startswith("I") or im.mode == "F":
            raise ValueError(f"{path}: only 8-bit images are supported")
        if im.mode in ("1", "L", "LA"):
            return np.asarray(im.convert("L")).copy()
        return np.asarray(im.convert("RGB")).copy()


def read_gray(path) -> np.ndarray:
    """Gray frame as float64. Color files are reduced to BT.601 luma."""
    arr = read_image(path)
    if arr.ndim == 3:
        arr = np.asarray(Image.fromarray(arr).convert("L"))
    return arr.astype(np.float64)


def to_uint8(frame) -> np.ndarray:
    return np.clip(np.rint(np.asarray(frame, dtype=np.float64)), 0, 255).astype(np.uint8)


def write_image(path, img) -> None:
    """Write a gray (H, W) or RGB (H, W, 3) image; floats are rounded and clipped."""
    arr = np.asarray(img)
    if arr.dtype != np.uint8:
        arr = to_uint8(arr)
    if arr.ndim == 2:
        mode = "L"
    elif arr.ndim == 3 and arr.shape[2] == 3:
        mode = "RGB"
    else:
        raise ValueError(f"cannot write image of shape {arr.shape}")
    fmt = _format_for(path)
    if fmt == "PPM" and Path(path).suffix.lower() == ".pgm" and mode != "L":
        raise ValueError("a .pgm file must hold a gray image")
    Image.fromarray(arr).save(path, format=fmt)
