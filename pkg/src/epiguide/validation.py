"""Input validation helpers, in the spirit of ``sklearn.utils.validation``."""

from __future__ import annotations

import numbers

import numpy as np

from .errors import DomainError


def check_frame(frame, name: str = "frame") -> np.ndarray:
    """Return ``frame`` as a finite 2-D float64 array.

    Accepts anything ``np.asarray`` understands, including uint8 images.
    The returned array is a copy only when a conversion was needed.
    """
    arr = np.asarray(frame)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-D gray image, got shape {arr.shape}")
    if arr.shape[0] == 0 or arr.shape[1] == 0:
        raise ValueError(f"{name} must be non-empty, got shape {arr.shape}")
    arr = np.asarray(arr, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite samples")
    return arr


def check_same_shape(a: np.ndarray, b: np.ndarray, names=("a", "b")) -> None:
    if a.shape != b.shape:
        raise ValueError(
            f"{names[0]} and {names[1]} differ in shape: {a.shape} vs {b.shape}"
        )


def check_rgb(img, name: str = "image") -> np.ndarray:
    """Return ``img`` as an (H, W, 3) uint8 array."""
    arr = np.asarray(img)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"{name} must have shape (H, W, 3), got {arr.shape}")
    if arr.dtype != np.uint8:
        if np.issubdtype(arr.dtype, np.integer) and arr.size and (
            arr.min() < 0 or arr.max() > 255
        ):
            raise ValueError(f"{name} samples must lie in [0, 255]")
        arr = arr.astype(np.uint8)
    return arr


def check_scalar(x, name: str, *, min_val=None, max_val=None, strict_min=False,
                 integer=False):
    """Validate a real (or integer) scalar and its bounds, sklearn ``check_scalar`` style."""
    kind = numbers.Integral if integer else numbers.Real
    if isinstance(x, bool) or not isinstance(x, kind):
        raise TypeError(f"{name} must be {'an integer' if integer else 'a real number'}, "
                        f"got {type(x).__name__}")
    if not integer and not np.isfinite(x):
        raise DomainError(f"{name} must be finite, got {x}")
    if min_val is not None:
        if (strict_min and x <= min_val) or (not strict_min and x < min_val):
            op = ">" if strict_min else ">="
            raise DomainError(f"{name} must be {op} {min_val}, got {x}")
    if max_val is not None and x > max_val:
        raise DomainError(f"{name} must be <= {max_val}, got {x}")
    return x


def pad_to_multiple(frame: np.ndarray, block: int) -> np.ndarray:
    """Edge-replicate ``frame`` on the bottom/right up to a multiple of ``block``."""
    h, w = frame.shape
    ph = (-h) % block
    pw = (-w) % block
    if ph == 0 and pw == 0:
        return frame
    return np.pad(frame, ((0, ph), (0, pw)), mode="edge")
