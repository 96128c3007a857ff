"""PBR texture stack and bilinear sampling."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvariantError
from . import images

# Texture arrays are indexed [u_texel, v_texel, channel] so that axis 0
# follows u; UV (0, 0) maps to texel (0, 0).


@dataclass
class PBRTextureSet:
    diffuse: np.ndarray    # (R, R, 3) in [0, 1]
    normal: np.ndarray     # (R, R, 3) raw container values; decode = 2x - 1
    specular: np.ndarray   # (R, R, 3) in [0, 1]
    uv_mask: np.ndarray    # (R, R) bool

    def __post_init__(self):
        self.diffuse = np.ascontiguousarray(self.diffuse, dtype=np.float32)
        self.normal = np.ascontiguousarray(self.normal, dtype=np.float32)
        self.specular = np.ascontiguousarray(self.specular, dtype=np.float32)
        self.uv_mask = np.ascontiguousarray(self.uv_mask).astype(bool)

    @property
    def resolution(self) -> int:
        return self.diffuse.shape[0]

    def validate(self) -> None:
        r = self.resolution
        for name in ("diffuse", "normal", "specular"):
            img = getattr(self, name)
            if img.shape != (r, r, 3):
                raise InvariantError(f"{name} map is {img.shape}, expected ({r}, {r}, 3)")
        if self.uv_mask.shape != (r, r):
            raise InvariantError("uv mask resolution mismatch")
        decoded = self.decoded_normals()
        lengths = np.linalg.norm(decoded, axis=-1)
        if self.uv_mask.any():
            err = np.abs(lengths[self.uv_mask] - 1.0).max()
            if err > 1e-3:
                raise InvariantError(f"decoded normals deviate from unit length by {err:.2e}")

    def decoded_normals(self) -> np.ndarray:
        return self.normal.astype(np.float64) * 2.0 - 1.0

    def stacked(self) -> np.ndarray:
        """diffuse | normal | specular along channels, (R, R, 9)."""
        return np.concatenate([self.diffuse, self.normal, self.specular], axis=2)

    def save(self, directory, prefix: str = "") -> dict:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = {}
        for name in ("diffuse", "normal", "specular"):
            p = directory / f"{prefix}{name}.png"
            images.write_png(p, np.swapaxes(getattr(self, name), 0, 1), bits=16)
            paths[name] = str(p)
        p = directory / f"{prefix}mask.png"
        images.write_png(p, np.swapaxes(self.uv_mask.astype(np.float32), 0, 1))
        paths["mask"] = str(p)
        return paths

    @classmethod
    def load(cls, diffuse_path, normal_path, specular_path, mask_path=None) -> "PBRTextureSet":
        def read(p):
            return np.ascontiguousarray(np.swapaxes(images.read_image(p), 0, 1))

        diffuse = read(diffuse_path)
        normal = read(normal_path)
        specular = read(specular_path)
        if mask_path is not None:
            mask = read(mask_path)[:, :, 0] > 0.5
        else:
            mask = np.ones(diffuse.shape[:2], dtype=bool)
        tex = cls(diffuse, normal, specular, mask)
        tex.validate()
        return tex


def sample_bilinear(img: np.ndarray, uv: np.ndarray) -> np.ndarray:
    """Bilinear sample of a (R, R, C) texture at UV points, clamp addressing."""
    uv = np.asarray(uv, dtype=np.float64).reshape(-1, 2)
    r = img.shape[0]
    x = np.clip(uv[:, 0] * r - 0.5, 0.0, r - 1.0)
    y = np.clip(uv[:, 1] * r - 0.5, 0.0, r - 1.0)
    x0 = np.floor(x).astype(int)
    y0 = np.floor(y).astype(int)
    x1 = np.minimum(x0 + 1, r - 1)
    y1 = np.minimum(y0 + 1, r - 1)
    fx = (x - x0)[:, None]
    fy = (y - y0)[:, None]
    img = img.reshape(r, r, -1)
    return ((img[x0, y0] * (1 - fx) + img[x1, y0] * fx) * (1 - fy)
            + (img[x0, y1] * (1 - fx) + img[x1, y1] * fx) * fy)
