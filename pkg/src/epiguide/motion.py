"""Rigid poses and vehicle ego-motion.

Vehicle frame follows ISO 8855: x forward, y left, z up, yaw
counter-clockwise positive. A :class:`Pose` maps points from a source
frame into a destination frame, ``p' = R @ p + t``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, SchemaError

MOTION_SCHEMA_VERSION = 1
# below this |yaw rate| (deg/s) the straight-line branch is used
YAW_RATE_EPS = 1e-6
_ORTHO_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform ``p' = R p + t`` (R: 3x3 rotation, t: meters)."""

    R: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        R = np.array(self.R, dtype=np.float64).reshape(3, 3)
        t = np.array(self.t, dtype=np.float64).reshape(3)
        if not (np.all(np.isfinite(R)) and np.all(np.isfinite(t))):
            raise DomainError("pose contains non-finite values")
        if np.max(np.abs(R.T @ R - np.eye(3))) > _ORTHO_TOL or abs(np.linalg.det(R) - 1.0) > _ORTHO_TOL:
            raise DomainError("R must be orthonormal with det +1")
        R.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    def apply(self, points):
        """Transform points of shape (..., 3)."""
        p = np.asarray(points, dtype=np.float64)
        return p @ self.R.T + self.t

    def matrix(self) -> np.ndarray:
        """4x4 homogeneous matrix."""
        m = np.eye(4)
        m[:3, :3] = self.R
        m[:3, 3] = self.t
        return m

    def is_identity(self) -> bool:
        return bool(np.array_equal(self.R, np.eye(3)) and not np.any(self.t))

    def to_dict(self) -> dict:
        return {"R": self.R.reshape(-1).tolist(), "t": self.t.tolist()}

    @classmethod
    def from_dict(cls, data) -> "Pose":
        if not isinstance(data, dict):
            raise SchemaError("pose must be a JSON object")
        R = data.get("R")
        t = data.get("t")
        if not isinstance(R, list) or len(R) != 9 or not all(_is_number(v) for v in R):
            raise SchemaError("field 'R' must be 9 numbers, row-major", "R")
        if not isinstance(t, list) or len(t) != 3 or not all(_is_number(v) for v in t):
            raise SchemaError("field 't' must be 3 numbers", "t")
        try:
            return cls(np.array(R).reshape(3, 3), np.array(t))
        except DomainError as exc:
            raise SchemaError(f"invalid pose: {exc}", "R") from exc


@dataclass(frozen=True)
class EgoMotion:
    """Planar vehicle motion between two frames.

    speed in m/s, yaw_rate in deg/s (counter-clockwise positive), dt in s.
    """

    speed: float
    yaw_rate: float
    dt: float

    def __post_init__(self):
        for name in ("speed", "yaw_rate", "dt"):
            if not math.isfinite(getattr(self, name)):
                raise DomainError(f"{name} must be finite")
        if self.dt <= 0:
            raise DomainError(f"dt must be positive, got {self.dt}")
        if self.speed < 0:
            raise DomainError(f"speed must be non-negative, got {self.speed}")

    @classmethod
    def from_dict(cls, data) -> "EgoMotion":
        if not isinstance(data, dict):
            raise SchemaError("motion must be a JSON object")
        version = data.get("schema_version", MOTION_SCHEMA_VERSION)
        if version != MOTION_SCHEMA_VERSION:
            raise SchemaError(f"unsupported schema_version {version!r}", "schema_version")
        vals = {}
        for key in ("speed_mps", "yaw_rate_dps", "dt_s"):
            if key not in data:
                raise SchemaError(f"motion is missing field '{key}'", key)
            if not _is_number(data[key]):
                raise SchemaError(f"field '{key}' must be a number", key)
            vals[key] = float(data[key])
        try:
            return cls(vals["speed_mps"], vals["yaw_rate_dps"], vals["dt_s"])
        except DomainError as exc:
            raise SchemaError(f"invalid motion: {exc}") from exc

    def to_dict(self) -> dict:
        return {
            "schema_version": MOTION_SCHEMA_VERSION,
            "speed_mps": self.speed,
            "yaw_rate_dps": self.yaw_rate,
            "dt_s": self.dt,
        }


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def load_json(path):
    with open(path, encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: not valid JSON ({exc})") from exc


def yaw_matrix(psi: float) -> np.ndarray:
    c, s = math.cos(psi), math.sin(psi)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def orthonormalize(R: np.ndarray) -> np.ndarray:
    """Nearest rotation matrix in the Frobenius sense."""
    u, _, vt = np.linalg.svd(R)
    Q = u @ vt
    if np.linalg.det(Q) < 0:
        u[:, -1] = -u[:, -1]
        Q = u @ vt
    return Q


def compose(a: Pose, b: Pose) -> Pose:
    """Pose applying ``b`` first, then ``a``: ``compose(a, b).apply(p) == a.apply(b.apply(p))``."""
    R = a.R @ b.R
    if np.max(np.abs(R.T @ R - np.eye(3))) > 1e-14:
        R = orthonormalize(R)
    return Pose(R, a.R @ b.t + a.t)


def invert(a: Pose) -> Pose:
    return Pose(a.R.T, -(a.R.T @ a.t))


def vehicle_motion_pose(ego: EgoMotion) -> Pose:
    """Vehicle frame at ``t`` expressed in the vehicle frame at ``t - dt``.

    Circular-arc (unicycle) motion on the ground plane. The returned pose
    maps points given in the new vehicle frame into the old one.
    """
    psi = math.radians(ego.yaw_rate * ego.dt)
    dist = ego.speed * ego.dt
    if abs(ego.yaw_rate) <= YAW_RATE_EPS:
        # second-order series of the arc; exact in the limit, 1e-20 m off at eps
        dx = dist * (1.0 - psi * psi / 6.0)
        dy = dist * psi / 2.0
    else:
        # chord of an arc with radius speed/omega, written without 1 - cos cancellation
        dx = dist * math.sin(psi) / psi
        dy = dist * 2.0 * math.sin(0.5 * psi) ** 2 / psi
    return Pose(yaw_matrix(psi), np.array([dx, dy, 0.0]))


def relative_camera_pose(vehicle_motion: Pose, extrinsics: Pose) -> Pose:
    """Camera at ``t`` relative to the camera at ``t - dt``.

    ``extrinsics`` is camera-to-vehicle. The result maps target-frame
    camera coordinates into the reference camera frame: ``X^-1 M X``.
    """
    return compose(invert(extrinsics), compose(vehicle_motion, extrinsics))


def front_camera_extrinsics(position=(0.0, 0.0, 0.0)) -> Pose:
    """Camera-to-vehicle pose of a camera looking along the vehicle's +x axis."""
    # camera x (right) -> vehicle -y, camera y (down) -> vehicle -z, camera z -> vehicle x
    R = np.array([[0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]])
    return Pose(R, np.asarray(position, dtype=np.float64))


def load_motion(path) -> EgoMotion:
    return EgoMotion.from_dict(load_json(path))


def load_extrinsics(path, invert_direction: bool = False) -> Pose:
    """Read a camera-to-vehicle pose; ``invert_direction`` for vehicle-to-camera files."""
    pose = Pose.from_dict(load_json(path))
    return invert(pose) if invert_direction else pose
