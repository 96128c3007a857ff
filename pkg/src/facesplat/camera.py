"""Pinhole camera. Camera space is x-right, y-down, z-forward."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvariantError


@dataclass
class Camera:
    position: np.ndarray       # (3,)
    orientation: np.ndarray    # (3, 3) world-to-camera rotation
    vertical_fov_degrees: float
    width: int
    height: int
    near: float = 0.01
    far: float = 100.0

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64).reshape(3)
        self.orientation = np.asarray(self.orientation, dtype=np.float64).reshape(3, 3)

    def validate(self) -> None:
        r = self.orientation
        if np.abs(r @ r.T - np.eye(3)).max() > 1e-6:
            raise InvariantError("camera orientation is not orthonormal")
        if not (self.near < self.far):
            raise InvariantError("camera near must be < far")
        if not (1.0 < self.vertical_fov_degrees < 179.0):
            raise InvariantError("vertical fov must lie in (1, 179) degrees")

    @property
    def focal(self) -> float:
        """Focal length in pixels (square pixels, vertical fov)."""
        return 0.5 * self.height / math.tan(math.radians(self.vertical_fov_degrees) / 2.0)

    @property
    def principal(self) -> tuple[float, float]:
        return 0.5 * self.width, 0.5 * self.height

    def world_to_camera(self, points: np.ndarray) -> np.ndarray:
        return (points - self.position) @ self.orientation.T

    def to_dict(self) -> dict:
        return {
            "position": self.position.tolist(),
            "orientation": self.orientation.tolist(),
            "vertical_fov_degrees": self.vertical_fov_degrees,
            "width": self.width, "height": self.height,
            "near": self.near, "far": self.far,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Camera":
        cam = cls(np.asarray(d["position"]), np.asarray(d["orientation"]),
                  float(d["vertical_fov_degrees"]), int(d["width"]), int(d["height"]),
                  float(d.get("near", 0.01)), float(d.get("far", 100.0)))
        cam.validate()
        return cam

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path) -> "Camera":
        return cls.from_dict(json.loads(Path(path).read_text()))


def look_at(position, target, up=(0.0, 0.0, 1.0), *, fov=40.0, width=256, height=256,
            near=0.01, far=100.0) -> Camera:
    """Camera at `position` looking toward `target` (z-forward, y-down)."""
    position = np.asarray(position, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - position
    forward = forward / np.linalg.norm(forward)
    up = np.asarray(up, dtype=np.float64)
    right = np.cross(forward, up)
    n = np.linalg.norm(right)
    if n < 1e-9:  # forward parallel to up; pick another up
        up = np.asarray([0.0, 1.0, 0.0])
        right = np.cross(forward, up)
        n = np.linalg.norm(right)
    right = right / n
    down = np.cross(forward, right)
    orientation = np.stack([right, down, forward], axis=0)
    return Camera(position, orientation, fov, width, height, near, far)


def orbit(center, radius, azimuth_deg, elevation_deg, **kwargs) -> Camera:
    """Camera on a sphere around `center`, looking at it. Azimuth 0 is +x."""
    az = math.radians(azimuth_deg)
    el = math.radians(elevation_deg)
    center = np.asarray(center, dtype=np.float64)
    offset = radius * np.asarray([
        math.cos(el) * math.cos(az), math.cos(el) * math.sin(az), math.sin(el)])
    return look_at(center + offset, center, **kwargs)
