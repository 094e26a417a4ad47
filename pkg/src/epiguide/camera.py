"""Fisheye lens model with a 4th-degree radial polynomial.

A ray at field angle ``theta`` (angle to the optical axis) lands at radial
distance ``rho(theta) = k1*theta + k2*theta**2 + k3*theta**3 + k4*theta**4``
pixels from the distortion center.

Camera frame: z forward, x right, y down. Pixel origin is the top-left
sample; integer coordinates are sample centers.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DomainError, SchemaError

CALIBRATION_SCHEMA_VERSION = 1
DEFAULT_THETA_MAX_DEG = 95.0
_MONOTONE_SAMPLES = 4096
# slack for round-off at the edge of the lens domain
_THETA_SLACK = 1e-12
_RHO_SLACK = 1e-9


@dataclass(frozen=True)
class FisheyeIntrinsics:
    """Radial polynomial fisheye intrinsics.

    Parameters
    ----------
    k : tuple of 4 floats
        Polynomial coefficients (k1, k2, k3, k4), pixels per radian**n.
    cx, cy : float
        Distortion center in pixels.
    width, height : int
        Image size in pixels.
    theta_max : float
        Largest field angle covered by the lens, radians.
    """

    k: tuple
    cx: float
    cy: float
    width: int
    height: int
    theta_max: float = math.radians(DEFAULT_THETA_MAX_DEG)

    def __post_init__(self):
        k = tuple(float(v) for v in self.k)
        if len(k) != 4:
            raise DomainError(f"k must have 4 coefficients, got {len(k)}")
        object.__setattr__(self, "k", k)
        for name in ("cx", "cy", "theta_max"):
            val = float(getattr(self, name))
            if not math.isfinite(val):
                raise DomainError(f"{name} must be finite")
            object.__setattr__(self, name, val)
        if not all(math.isfinite(v) for v in k):
            raise DomainError("k must be finite")
        if int(self.width) <= 0 or int(self.height) <= 0:
            raise DomainError("width and height must be positive")
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))
        if not 0.0 < self.theta_max <= math.pi:
            raise DomainError(f"theta_max must lie in (0, pi], got {self.theta_max}")
        samples = _poly(self.k, np.linspace(0.0, self.theta_max, _MONOTONE_SAMPLES))
        if not np.all(np.diff(samples) > 0):
            raise DomainError("rho(theta) is not strictly increasing on [0, theta_max]")

    @property
    def rho_max(self) -> float:
        """Radius of the image circle, ``rho(theta_max)``."""
        return float(_poly(self.k, self.theta_max))

    # -- serialization -----------------------------------------------------
    @classmethod
    def from_dict(cls, data: dict) -> "FisheyeIntrinsics":
        if not isinstance(data, dict):
            raise SchemaError("calibration must be a JSON object")
        version = data.get("schema_version", CALIBRATION_SCHEMA_VERSION)
        if version != CALIBRATION_SCHEMA_VERSION:
            raise SchemaError(f"unsupported schema_version {version!r}", "schema_version")
        for key in ("k", "cx", "cy", "width", "height"):
            if key not in data:
                raise SchemaError(f"calibration is missing field '{key}'", key)
        k = data["k"]
        if not isinstance(k, list) or len(k) != 4 or not all(_is_number(v) for v in k):
            raise SchemaError("field 'k' must be a list of 4 numbers", "k")
        for key in ("cx", "cy", "width", "height", "theta_max_deg"):
            if key in data and not _is_number(data[key]):
                raise SchemaError(f"field '{key}' must be a number", key)
        theta_max = math.radians(float(data.get("theta_max_deg", DEFAULT_THETA_MAX_DEG)))
        try:
            return cls(tuple(k), data["cx"], data["cy"], int(data["width"]),
                       int(data["height"]), theta_max)
        except DomainError as exc:
            raise SchemaError(f"invalid calibration: {exc}") from exc

    def to_dict(self) -> dict:
        return {
            "schema_version": CALIBRATION_SCHEMA_VERSION,
            "k": list(self.k),
            "cx": self.cx,
            "cy": self.cy,
            "width": self.width,
            "height": self.height,
            "theta_max_deg": math.degrees(self.theta_max),
        }


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def load_calibration(path) -> FisheyeIntrinsics:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: not valid JSON ({exc})") from exc
    return FisheyeIntrinsics.from_dict(data)


def save_calibration(intr: FisheyeIntrinsics, path) -> None:
    Path(path).write_text(json.dumps(intr.to_dict(), indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")


def _poly(k, theta):
    k1, k2, k3, k4 = k
    return theta * (k1 + theta * (k2 + theta * (k3 + theta * k4)))


def _dpoly(k, theta):
    k1, k2, k3, k4 = k
    return k1 + theta * (2.0 * k2 + theta * (3.0 * k3 + theta * 4.0 * k4))


def theta_to_rho(intr: FisheyeIntrinsics, theta):
    """Radial image distance (pixels) of a ray at field angle ``theta``."""
    theta = np.asarray(theta, dtype=np.float64)
    if np.any(~np.isfinite(theta)) or np.any(theta < 0) or np.any(
        theta > intr.theta_max + _THETA_SLACK
    ):
        raise DomainError(f"theta must lie in [0, {intr.theta_max}]")
    rho = _poly(intr.k, theta)
    return float(rho) if rho.ndim == 0 else rho


def _invert_poly(intr: FisheyeIntrinsics, rho: np.ndarray) -> np.ndarray:
    # bisection narrows the bracket of the unique root, Newton polishes inside it
    lo = np.zeros_like(rho)
    hi = np.full_like(rho, intr.theta_max)
    for _ in range(20):
        mid = 0.5 * (lo + hi)
        above = _poly(intr.k, mid) > rho
        hi = np.where(above, mid, hi)
        lo = np.where(above, lo, mid)
    theta = 0.5 * (lo + hi)
    for _ in range(4):
        step = (_poly(intr.k, theta) - rho) / _dpoly(intr.k, theta)
        theta = np.clip(theta - step, lo, hi)
    return np.where(rho == 0.0, 0.0, theta)


def rho_to_theta(intr: FisheyeIntrinsics, rho):
    """Field angle whose image lies ``rho`` pixels from the center."""
    rho = np.asarray(rho, dtype=np.float64)
    rho_max = intr.rho_max
    if np.any(~np.isfinite(rho)) or np.any(rho < 0) or np.any(rho > rho_max + _RHO_SLACK):
        raise DomainError(f"rho must lie in [0, {rho_max}]")
    theta = _invert_poly(intr, np.minimum(rho, rho_max))
    return float(theta) if theta.ndim == 0 else theta


def project(intr: FisheyeIntrinsics, dirs):
    """Project camera-frame directions to pixels.

    ``dirs`` has shape (..., 3); it need not be normalized. Returns
    ``(pixels, valid)`` where ``pixels`` has shape (..., 2) and ``valid`` is
    False for directions beyond ``theta_max``. Invalid directions still get
    a pixel from the polynomial so callers can inspect them.
    """
    d = np.asarray(dirs, dtype=np.float64)
    if d.shape[-1:] != (3,):
        raise ValueError(f"dirs must have a trailing axis of 3, got {d.shape}")
    if not np.all(np.isfinite(d)):
        raise DomainError("dirs contains non-finite values")
    x, y, z = d[..., 0], d[..., 1], d[..., 2]
    r_xy = np.hypot(x, y)
    theta = np.arctan2(r_xy, z)
    rho = _poly(intr.k, theta)
    on_axis = r_xy == 0.0
    safe = np.where(on_axis, 1.0, r_xy)
    scale = np.where(on_axis, 0.0, rho / safe)
    px = np.stack([intr.cx + scale * x, intr.cy + scale * y], axis=-1)
    valid = (theta <= intr.theta_max) & ((r_xy > 0.0) | (z > 0.0))
    return px, valid


def unproject_masked(intr: FisheyeIntrinsics, pixels):
    """Like :func:`unproject` but flags out-of-domain pixels instead of raising.

    Returns ``(rays, valid)``; rays of invalid pixels are NaN.
    """
    p = np.asarray(pixels, dtype=np.float64)
    if p.shape[-1:] != (2,):
        raise ValueError(f"pixels must have a trailing axis of 2, got {p.shape}")
    du = p[..., 0] - intr.cx
    dv = p[..., 1] - intr.cy
    rho = np.hypot(du, dv)
    rho_max = intr.rho_max
    valid = np.isfinite(rho) & (rho <= rho_max + _RHO_SLACK)
    rho_in = np.where(valid, np.minimum(rho, rho_max), 0.0)
    theta = _invert_poly(intr, rho_in)
    safe = np.where(rho_in > 0, rho_in, 1.0)
    s = np.where(rho_in > 0, np.sin(theta) / safe, 0.0)
    rays = np.stack([s * du, s * dv, np.cos(theta)], axis=-1)
    rays = np.where(valid[..., None], rays, np.nan)
    return rays, valid


def unproject(intr: FisheyeIntrinsics, pixels):
    """Unit camera-frame rays for pixels; raises DomainError outside the image circle."""
    rays, valid = unproject_masked(intr, pixels)
    if not np.all(valid):
        raise DomainError("pixel lies outside the lens image circle")
    return rays
