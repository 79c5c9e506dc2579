"""Pinhole cameras on the view sphere.

Conventions used throughout the package:

- World frame is right-handed with +z up. A camera sits on a sphere of
  radius ``radius`` around the origin, parameterized by a polar angle
  measured from +z and an azimuth measured from +x toward +y, and always
  looks at the origin.
- Camera frame is OpenCV-style (+x right, +y down, +z forward), so the
  world origin lands at camera coordinates (0, 0, radius).
- Pixel (ix, iy) covers the unit square whose center is the continuous
  coordinate (ix + 0.5, iy + 0.5); u runs along width/x, v along height/y.
- Depth values are Euclidean distances from the camera center along the
  pixel ray, not z-depths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BehindCameraError

_WORLD_UP = np.array([0.0, 0.0, 1.0])
_FALLBACK_UP = np.array([1.0, 0.0, 0.0])

DEFAULT_RADIUS = 3.0
DEFAULT_FOV_DEG = 60.0
DEFAULT_IMAGE_SIZE = 384


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class CameraPose:
    """Spherical camera position, always looking at the world origin."""

    polar_deg: float
    azimuth_deg: float
    radius: float = DEFAULT_RADIUS
    fov_deg: float = DEFAULT_FOV_DEG

    def __post_init__(self):
        if not 0.0 < self.polar_deg < 180.0:
            raise ValueError(f"polar angle must be in (0, 180), got {self.polar_deg}")
        if not -180.0 < self.azimuth_deg <= 180.0:
            raise ValueError(f"azimuth must be in (-180, 180], got {self.azimuth_deg}")
        if self.radius <= 0.0:
            raise ValueError("radius must be positive")
        if not 0.0 < self.fov_deg < 180.0:
            raise ValueError("fov must be in (0, 180)")

    @property
    def center(self) -> np.ndarray:
        """Camera center o = r * (sin t cos p, sin t sin p, cos t)."""
        theta = math.radians(self.polar_deg)
        phi = math.radians(self.azimuth_deg)
        st = math.sin(theta)
        return np.array(
            [
                self.radius * st * math.cos(phi),
                self.radius * st * math.sin(phi),
                self.radius * math.cos(theta),
            ]
        )

    @property
    def unit_direction(self) -> np.ndarray:
        return self.center / self.radius

    def to_dict(self) -> dict:
        return {
            "polar_deg": self.polar_deg,
            "azimuth_deg": self.azimuth_deg,
            "radius": self.radius,
            "fov_deg": self.fov_deg,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CameraPose":
        return cls(
            polar_deg=float(d["polar_deg"]),
            azimuth_deg=float(d["azimuth_deg"]),
            radius=float(d.get("radius", DEFAULT_RADIUS)),
            fov_deg=float(d.get("fov_deg", DEFAULT_FOV_DEG)),
        )


@dataclass(frozen=True)
class Intrinsics:
    """Square-pixel pinhole intrinsics."""

    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image dimensions must be positive")
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")

    @classmethod
    def from_fov(cls, width: int, height: int | None = None,
                 fov_deg: float = DEFAULT_FOV_DEG) -> "Intrinsics":
        """fx = fy = (width/2) / tan(fov/2), principal point at the image center."""
        if height is None:
            height = width
        f = (width / 2.0) / math.tan(math.radians(fov_deg) / 2.0)
        return cls(width=width, height=height, fx=f, fy=f,
                   cx=width / 2.0, cy=height / 2.0)

    @property
    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    def scaled(self, factor: int) -> "Intrinsics":
        """Intrinsics for the same field of view at factor x the resolution."""
        return Intrinsics(
            width=self.width * factor,
            height=self.height * factor,
            fx=self.fx * factor,
            fy=self.fy * factor,
            cx=self.cx * factor,
            cy=self.cy * factor,
        )


@dataclass(frozen=True)
class Extrinsics:
    """World-to-camera rigid transform: x_cam = rotation @ x_world + translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", _frozen(self.rotation))
        object.__setattr__(self, "translation", _frozen(self.translation))
        if self.rotation.shape != (3, 3) or self.translation.shape != (3,):
            raise ValueError("rotation must be 3x3 and translation a 3-vector")
        err = np.abs(self.rotation @ self.rotation.T - np.eye(3)).max()
        if err > 1e-9:
            raise ValueError(f"rotation is not orthonormal (max error {err:.2e})")
        if np.linalg.det(self.rotation) < 0.0:
            raise ValueError("rotation must have det +1")

    @property
    def camera_center(self) -> np.ndarray:
        return -self.rotation.T @ self.translation

    @property
    def matrix4(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def world_to_camera(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation.T + self.translation


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "origin", _frozen(self.origin))
        object.__setattr__(self, "direction", _frozen(self.direction))
        if abs(np.linalg.norm(self.direction) - 1.0) > 1e-9:
            raise ValueError("ray direction must be unit length")

    def at(self, t: float) -> np.ndarray:
        return self.origin + t * self.direction


def pose_to_extrinsics(pose: CameraPose) -> Extrinsics:
    """Look-at extrinsics for a pose: camera at pose.center, optical axis
    through the origin, up-hint +z (+x when the axis is colinear with +z)."""
    o = pose.center
    forward = -o / np.linalg.norm(o)
    up = _WORLD_UP
    if abs(forward @ up) > 1.0 - 1e-12:
        up = _FALLBACK_UP
    right = np.cross(forward, up)
    right = right / np.linalg.norm(right)
    down = np.cross(forward, right)
    rotation = np.stack([right, down, forward])
    translation = -rotation @ o
    return Extrinsics(rotation=rotation, translation=translation)


def project(K: Intrinsics, E: Extrinsics, point) -> tuple[np.ndarray, float]:
    """Project one world point to continuous pixel coordinates.

    Returns (pixel (u, v), camera-frame depth z). Raises BehindCameraError
    when the point is at or behind the camera plane.
    """
    pc = E.world_to_camera(np.asarray(point, dtype=np.float64))
    z = pc[2]
    if z <= 0.0:
        raise BehindCameraError(f"point has camera-frame z = {z}")
    u = K.cx + K.fx * pc[0] / z
    v = K.cy + K.fy * pc[1] / z
    return np.array([u, v]), float(z)


def project_points(K: Intrinsics, E: Extrinsics,
                   points: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized projection. Returns (uv (N,2), z (N,), valid (N,)).

    uv is undefined (NaN-free but meaningless) where valid is False.
    """
    pc = E.world_to_camera(points)
    z = pc[:, 2]
    valid = z > 0.0
    safe_z = np.where(valid, z, 1.0)
    uv = np.empty((len(pc), 2))
    uv[:, 0] = K.cx + K.fx * pc[:, 0] / safe_z
    uv[:, 1] = K.cy + K.fy * pc[:, 1] / safe_z
    return uv, z, valid


def _pixel_directions_world(K: Intrinsics, E: Extrinsics, uv: np.ndarray) -> np.ndarray:
    """Unit world-frame ray directions for continuous pixel coordinates (N,2)."""
    x = (uv[:, 0] - K.cx) / K.fx
    y = (uv[:, 1] - K.cy) / K.fy
    d = np.stack([x, y, np.ones_like(x)], axis=1)
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return d @ E.rotation  # rows of R are the camera axes, so d @ R = R^T d


def unproject(K: Intrinsics, E: Extrinsics, pixel, distance: float) -> np.ndarray:
    """World point at a Euclidean ray distance from the camera center
    along the ray through a continuous pixel coordinate."""
    if distance <= 0.0:
        raise ValueError(f"distance must be positive, got {distance}")
    uv = np.asarray(pixel, dtype=np.float64).reshape(1, 2)
    d = _pixel_directions_world(K, E, uv)[0]
    return E.camera_center + distance * d


def pixel_ray(K: Intrinsics, E: Extrinsics, pixel) -> Ray:
    uv = np.asarray(pixel, dtype=np.float64).reshape(1, 2)
    d = _pixel_directions_world(K, E, uv)[0]
    return Ray(origin=E.camera_center, direction=d)


def relative_transform(src: Extrinsics, dst: Extrinsics) -> np.ndarray:
    """4x4 rigid transform taking src-camera coordinates to dst-camera
    coordinates."""
    r = dst.rotation @ src.rotation.T
    t = dst.translation - r @ src.translation
    m = np.eye(4)
    m[:3, :3] = r
    m[:3, 3] = t
    return m


def pixel_grid_directions(K: Intrinsics, E: Extrinsics,
                          upscale: int = 1) -> np.ndarray:
    """Unit world directions through every (sub)pixel center, row-major.

    With upscale = s, each pixel is split into s x s subpixels; subpixel
    column a maps to the continuous coordinate (a + 0.5) / s, so upscale 1
    reproduces the pixel-center rays exactly.
    """
    w = K.width * upscale
    h = K.height * upscale
    u = (np.arange(w, dtype=np.float64) + 0.5) / upscale
    v = (np.arange(h, dtype=np.float64) + 0.5) / upscale
    uu, vv = np.meshgrid(u, v)  # vv varies along rows
    uv = np.stack([uu.ravel(), vv.ravel()], axis=1)
    return _pixel_directions_world(K, E, uv)


def angular_distance_deg(a: CameraPose, b: CameraPose) -> float:
    """Great-circle angle between two poses' directions on the view sphere."""
    c = float(np.clip(a.unit_direction @ b.unit_direction, -1.0, 1.0))
    return math.degrees(math.acos(c))
