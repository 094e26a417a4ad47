"""Synthetic two-view renderer: a textured plane seen by a fisheye camera.

The plane ``z = depth`` lives in the world frame. Its texture is a sum of
sinusoids, evaluated analytically at every pixel's ray hit. Each component
is attenuated by a Gaussian pixel footprint (computed from the local
pixel-to-plane Jacobian), which band-limits the image without any
resampling step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .camera import FisheyeIntrinsics, unproject_masked
from .errors import DomainError
from .motion import (
    EgoMotion,
    Pose,
    compose,
    front_camera_extrinsics,
    invert,
    relative_camera_pose,
    vehicle_motion_pose,
)

BACKGROUND = 0.0
_FOOTPRINT_SIGMA = 0.6  # pixels


def default_intrinsics(width: int = 640, height: int = 480) -> FisheyeIntrinsics:
    """A 190-degree lens whose horizon circle lies just outside the image corners."""
    scale = math.hypot(width, height) / 800.0
    return FisheyeIntrinsics((300.0 * scale, 0.0, -12.0 * scale, 0.0),
                             width / 2.0, height / 2.0, width, height,
                             math.radians(95.0))


@dataclass(frozen=True, eq=False)
class SyntheticScene:
    """Plane at ``plane_depth`` meters ahead of the world origin, two camera poses.

    Poses are camera-to-world. The world frame is the reference camera frame
    unless ``ref_pose`` says otherwise.
    """

    intrinsics: FisheyeIntrinsics
    plane_depth: float = 10.0
    ref_pose: Pose = field(default_factory=Pose.identity)
    target_pose: Pose = field(default_factory=Pose.identity)
    seed: int = 0
    n_waves: int = 12
    wavelength_range: tuple = (0.4, 3.0)  # meters
    amplitude: float = 110.0
    mean: float = 128.0

    def __post_init__(self):
        if not self.plane_depth > 0 or not math.isfinite(self.plane_depth):
            raise DomainError("plane_depth must be positive and finite")
        for name, pose in (("ref_pose", self.ref_pose), ("target_pose", self.target_pose)):
            if pose.t[2] >= self.plane_depth:
                raise DomainError(f"{name} camera is not in front of the plane")
        lo, hi = self.wavelength_range
        if not 0 < lo <= hi:
            raise DomainError("wavelength_range must satisfy 0 < lo <= hi")

    def texture(self):
        """Frequencies (cycles/m, shape (n, 2)), amplitudes and phases of the pattern."""
        rng = np.random.default_rng(self.seed)
        lo, hi = self.wavelength_range
        wavelength = np.exp(rng.uniform(math.log(lo), math.log(hi), self.n_waves))
        angle = rng.uniform(0.0, 2.0 * math.pi, self.n_waves)
        freqs = np.stack([np.cos(angle), np.sin(angle)], axis=-1) / wavelength[:, None]
        amps = np.full(self.n_waves, self.amplitude / self.n_waves)
        phases = rng.uniform(0.0, 2.0 * math.pi, self.n_waves)
        return freqs, amps, phases


def _plane_hits(scene: SyntheticScene, pose: Pose, pixels: np.ndarray):
    """World (X, Y) of each pixel's ray on the plane, and a hit mask."""
    rays, ok = unproject_masked(scene.intrinsics, pixels)
    rays = np.where(ok[..., None], rays, 0.0)
    dirs = rays @ pose.R.T
    dz = dirs[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        s = (scene.plane_depth - pose.t[2]) / dz
    hit = ok & (dz > 0) & np.isfinite(s) & (s > 0)
    s = np.where(hit, s, 0.0)
    xy = pose.t[:2] + s[..., None] * dirs[..., :2]
    return xy, hit


def render_view(scene: SyntheticScene, pose: Pose) -> np.ndarray:
    """Render the plane as seen from camera-to-world ``pose``."""
    intr = scene.intrinsics
    ys, xs = np.mgrid[0:intr.height, 0:intr.width].astype(np.float64)
    center = np.stack([xs, ys], axis=-1)
    xy, hit = _plane_hits(scene, pose, center)
    # pixel-to-plane Jacobian by central differences over one pixel
    offsets = {"du": (0.5, 0.0), "dv": (0.0, 0.5)}
    jac = {}
    resolved = hit.copy()
    for key, (ou, ov) in offsets.items():
        step = np.array([ou, ov])
        fwd, hf = _plane_hits(scene, pose, center + step)
        bwd, hb = _plane_hits(scene, pose, center - step)
        resolved &= hf & hb
        jac[key] = fwd - bwd

    freqs, amps, phases = scene.texture()
    img = np.full(xy.shape[:2], scene.mean)
    for f, a, ph in zip(freqs, amps, phases):
        nu_u = jac["du"] @ f
        nu_v = jac["dv"] @ f
        # a footprint that reaches past the horizon averages the pattern away
        atten = np.where(resolved, np.exp(
            -2.0 * math.pi ** 2 * _FOOTPRINT_SIGMA ** 2 * np.minimum(nu_u ** 2 + nu_v ** 2, 1e6)),
            0.0)
        img += a * atten * np.sin(2.0 * math.pi * (xy @ f) + ph)
    return np.where(hit, img, BACKGROUND)


def render_synthetic_pair(scene: SyntheticScene):
    """Render both views.

    Returns ``(ref, target, relpose)`` where ``relpose`` maps target-camera
    points into the reference camera frame.
    """
    ref = render_view(scene, scene.ref_pose)
    target = render_view(scene, scene.target_pose)
    relpose = compose(invert(scene.ref_pose), scene.target_pose)
    return ref, target, relpose


def forward_pose(distance: float) -> Pose:
    """Camera-to-world pose after moving ``distance`` meters along the optical axis."""
    return Pose(np.eye(3), np.array([0.0, 0.0, float(distance)]))


def yaw_pose(degrees: float) -> Pose:
    """Camera rotated about its vertical (y) axis; positive turns toward +x."""
    a = math.radians(degrees)
    c, s = math.cos(a), math.sin(a)
    return Pose(np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]]), np.zeros(3))


def ego_pose(speed: float, yaw_rate: float, dt: float) -> Pose:
    """Camera-frame pose of a front camera after planar vehicle motion."""
    return relative_camera_pose(vehicle_motion_pose(EgoMotion(speed, yaw_rate, dt)),
                                front_camera_extrinsics())

