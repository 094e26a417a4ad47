"""RGB <-> YUV 4:2:0 conversion and compression-ratio bookkeeping.

BT.601 limited range (Y in [16, 235], chroma in [16, 240]). Chroma is
subsampled by 2x2 box averaging and upsampled by nearest neighbour.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DomainError
from .validation import check_rgb

# rows: Y, Cb, Cr; applied to RGB in [0, 255]
_RGB_TO_YCC = np.array([
    [65.481, 128.553, 24.966],
    [-37.797, -74.203, 112.0],
    [112.0, -93.786, -18.214],
]) / 255.0
_OFFSET = np.array([16.0, 128.0, 128.0])
_YCC_TO_RGB = np.linalg.inv(_RGB_TO_YCC)
# RGB of a neutral pixel at luma Y is (Y - 16) * _GRAY_GAIN
_GRAY_GAIN = 255.0 / 219.0


@dataclass(frozen=True, eq=False)
class YuvImage420:
    """Planar 8-bit 4:2:0 image: full-size Y, half-size U (Cb) and V (Cr)."""

    y: np.ndarray
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        h, w = self.y.shape
        if h % 2 or w % 2:
            raise DomainError(f"YUV 4:2:0 needs even dimensions, got {w}x{h}")
        for name in ("u", "v"):
            if getattr(self, name).shape != (h // 2, w // 2):
                raise DomainError(f"{name} plane must be {w // 2}x{h // 2}")
        for name in ("y", "u", "v"):
            if getattr(self, name).dtype != np.uint8:
                raise DomainError(f"{name} plane must be uint8")

    @property
    def width(self) -> int:
        return self.y.shape[1]

    @property
    def height(self) -> int:
        return self.y.shape[0]

    @property
    def nbytes(self) -> int:
        return self.y.nbytes + self.u.nbytes + self.v.nbytes

    def tobytes(self) -> bytes:
        """Raw I420 layout: Y plane, then U, then V."""
        return self.y.tobytes() + self.u.tobytes() + self.v.tobytes()

    @classmethod
    def frombytes(cls, data: bytes, width: int, height: int) -> "YuvImage420":
        n = width * height
        if len(data) != yuv420_nbytes(width, height):
            raise DomainError(f"expected {yuv420_nbytes(width, height)} bytes for "
                              f"{width}x{height}, got {len(data)}")
        buf = np.frombuffer(data, dtype=np.uint8)
        q = n // 4
        return cls(buf[:n].reshape(height, width).copy(),
                   buf[n:n + q].reshape(height // 2, width // 2).copy(),
                   buf[n + q:].reshape(height // 2, width // 2).copy())


def yuv420_nbytes(width: int, height: int) -> int:
    if width % 2 or height % 2:
        raise DomainError("YUV 4:2:0 needs even dimensions")
    return width * height * 3 // 2


def rgb_nbytes(width: int, height: int) -> int:
    return width * height * 3


def _to_u8(x: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(x), 0, 255).astype(np.uint8)


def rgb_to_ycbcr(rgb) -> np.ndarray:
    """Full-resolution float Y, Cb, Cr (shape (H, W, 3)), unrounded."""
    return np.asarray(rgb, dtype=np.float64) @ _RGB_TO_YCC.T + _OFFSET


def rgb_to_yuv420(img) -> YuvImage420:
    rgb = check_rgb(img)
    h, w, _ = rgb.shape
    if h % 2 or w % 2:
        raise DomainError(f"YUV 4:2:0 needs even dimensions, got {w}x{h}")
    ycc = rgb_to_ycbcr(rgb)
    chroma = ycc[..., 1:].reshape(h // 2, 2, w // 2, 2, 2).mean(axis=(1, 3))
    return YuvImage420(_to_u8(ycc[..., 0]), _to_u8(chroma[..., 0]), _to_u8(chroma[..., 1]))


def yuv420_to_rgb(img: YuvImage420) -> np.ndarray:
    """Back to 8-bit RGB.

    Out-of-gamut colors are pulled toward the neutral gray of the same luma
    until they fit, so clipping never changes luma.
    """
    y = img.y.astype(np.float64)
    u = np.repeat(np.repeat(img.u, 2, axis=0), 2, axis=1).astype(np.float64)
    v = np.repeat(np.repeat(img.v, 2, axis=0), 2, axis=1).astype(np.float64)
    gray = np.clip((y - 16.0) * _GRAY_GAIN, 0.0, 255.0)[..., None]
    chroma_rgb = np.stack([u - 128.0, v - 128.0], axis=-1) @ _YCC_TO_RGB[:, 1:].T
    # largest s in [0, 1] keeping gray + s * chroma_rgb inside [0, 255]
    with np.errstate(divide="ignore", invalid="ignore"):
        up = np.where(chroma_rgb > 0, (255.0 - gray) / chroma_rgb, np.inf)
        down = np.where(chroma_rgb < 0, -gray / chroma_rgb, np.inf)
    s = np.clip(np.min(np.minimum(up, down), axis=-1, keepdims=True), 0.0, 1.0)
    return _to_u8(gray + s * chroma_rgb)


@dataclass(frozen=True)
class CompressionRecord:
    codec_label: str
    qp: int | None
    raw_bytes: int
    compressed_bytes: int
    cr: float

    def to_dict(self) -> dict:
        return {
            "codec": self.codec_label,
            "qp": self.qp,
            "raw_bytes": self.raw_bytes,
            "compressed_bytes": self.compressed_bytes,
            "cr": self.cr,
        }


def compression_ratio(raw_bytes, compressed_bytes, codec_label: str = "",
                      qp: int | None = None) -> CompressionRecord:
    """Raw size over compressed size. ``qp`` is metadata only (0..51)."""
    if raw_bytes <= 0:
        raise DomainError(f"raw_bytes must be positive, got {raw_bytes}")
    if compressed_bytes <= 0:
        raise DomainError(f"compressed_bytes must be positive, got {compressed_bytes}")
    if qp is not None and not 0 <= qp <= 51:
        raise DomainError(f"qp must lie in [0, 51], got {qp}")
    return CompressionRecord(codec_label, qp, raw_bytes, compressed_bytes,
                             raw_bytes / compressed_bytes)


def write_yuv(img: YuvImage420, path) -> int:
    data = img.tobytes()
    Path(path).write_bytes(data)
    return len(data)


def read_yuv(path, width: int, height: int) -> YuvImage420:
    return YuvImage420.frombytes(Path(path).read_bytes(), width, height)
