"""Splat asset: a fixed-count collection of UV-anchored Gaussian points.

Storage is struct-of-arrays (f32); `point(i)` gives a per-point view for
interactive poking. Scales live as logs (positivity is structural) and the
`.gfa` file stores the log parameterization so round-trips are bit-exact.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ChecksumError, FormatVersionError, InvariantError
from .mesh import COMPONENT_LABELS, FaceMesh, uv_from_cache


def sigmoid(x):
    return np.exp(-np.logaddexp(0.0, -np.asarray(x, dtype=np.float64)))


def logit(p):
    p = np.asarray(p, dtype=np.float64)
    return np.log(p / (1.0 - p))


@dataclass
class GaussianPoint:
    uv: np.ndarray            # (2,) in [0,1]^2
    offset: float             # along triangle normal, model units
    log_scale: np.ndarray     # (2,) log of tangent-plane scales
    rotation: np.ndarray      # (2,) (x, y), unit complex in-plane rotation
    opacity_logit: float
    sh_color: np.ndarray      # ((L+1)^2, 3)
    shadow_vector: np.ndarray  # (B+1,) in [0,1], entry 0 is the neutral term
    triangle_id: int
    barycentric: np.ndarray   # (2,) = (w0, w1)

    @property
    def scale(self) -> np.ndarray:
        return np.exp(self.log_scale)

    @property
    def opacity(self) -> float:
        return float(sigmoid(self.opacity_logit))


class SplatAsset:
    def __init__(self, uv, offset, log_scale, rotation, opacity_logit, sh_color,
                 shadow_vector, triangle_id, barycentric, *, mesh_hash: int,
                 sh_degree: int, epsilon: float, component_label: str = "foreface",
                 density: float = 0.0, seed: int = 0):
        self.uv = np.ascontiguousarray(uv, dtype=np.float32).reshape(-1, 2)
        n = len(self.uv)
        self.offset = np.ascontiguousarray(offset, dtype=np.float32).reshape(n)
        self.log_scale = np.ascontiguousarray(log_scale, dtype=np.float32).reshape(n, 2)
        self.rotation = np.ascontiguousarray(rotation, dtype=np.float32).reshape(n, 2)
        self.opacity_logit = np.ascontiguousarray(opacity_logit, dtype=np.float32).reshape(n)
        k = (sh_degree + 1) ** 2
        self.sh_color = np.ascontiguousarray(sh_color, dtype=np.float32).reshape(n, k, 3)
        sv = np.ascontiguousarray(shadow_vector, dtype=np.float32)
        self.shadow_vector = sv if sv.ndim == 2 and len(sv) == n else sv.reshape(n, -1)
        self.triangle_id = np.ascontiguousarray(triangle_id, dtype=np.int32).reshape(n)
        self.barycentric = np.ascontiguousarray(barycentric, dtype=np.float32).reshape(n, 2)
        self.mesh_hash = int(mesh_hash)
        self.sh_degree = int(sh_degree)
        self.epsilon = float(epsilon)
        self.component_label = component_label
        self.density = float(density)
        self.seed = int(seed)

    @property
    def num_points(self) -> int:
        return len(self.uv)

    @property
    def num_blendshapes(self) -> int:
        return self.shadow_vector.shape[1] - 1

    @property
    def opacity(self) -> np.ndarray:
        return sigmoid(self.opacity_logit.astype(np.float64)).astype(np.float32)

    def point(self, i: int) -> GaussianPoint:
        return GaussianPoint(
            uv=self.uv[i], offset=float(self.offset[i]), log_scale=self.log_scale[i],
            rotation=self.rotation[i], opacity_logit=float(self.opacity_logit[i]),
            sh_color=self.sh_color[i], shadow_vector=self.shadow_vector[i],
            triangle_id=int(self.triangle_id[i]), barycentric=self.barycentric[i])

    def select(self, indices) -> "SplatAsset":
        """New asset containing the given points; `self` is untouched."""
        idx = np.asarray(indices, dtype=np.int64)
        return SplatAsset(
            self.uv[idx], self.offset[idx], self.log_scale[idx], self.rotation[idx],
            self.opacity_logit[idx], self.sh_color[idx], self.shadow_vector[idx],
            self.triangle_id[idx], self.barycentric[idx],
            mesh_hash=self.mesh_hash, sh_degree=self.sh_degree, epsilon=self.epsilon,
            component_label=self.component_label, density=self.density, seed=self.seed)

    def copy(self) -> "SplatAsset":
        return self.select(np.arange(self.num_points))

    def renormalize(self) -> None:
        """Restore structural invariants after a raw parameter update."""
        norm = np.linalg.norm(self.rotation, axis=1, keepdims=True)
        self.rotation = (self.rotation / np.maximum(norm, 1e-12)).astype(np.float32)
        # neutral shading term stays in [0,1]; per-blendshape deltas are signed
        # so activations can darken as well as brighten (the factor itself is
        # clamped to [0,1] at evaluation)
        np.clip(self.shadow_vector[:, :1], 0.0, 1.0, out=self.shadow_vector[:, :1])
        np.clip(self.shadow_vector[:, 1:], -1.0, 1.0, out=self.shadow_vector[:, 1:])

    def validate(self, mesh: FaceMesh | None = None) -> None:
        norm = np.linalg.norm(self.rotation.astype(np.float64), axis=1)
        if self.num_points and np.abs(norm - 1.0).max() > 1e-6:
            raise InvariantError("rotation (x, y) not unit-normalized")
        if self.num_points:
            b = self.barycentric
            if b.min() < -1e-6 or (b.sum(axis=1) > 1.0 + 1e-6).any():
                raise InvariantError("barycentric coordinates out of range")
            if self.shadow_vector[:, 0].min() < 0.0 or self.shadow_vector[:, 0].max() > 1.0:
                raise InvariantError("neutral shadow entry outside [0, 1]")
            if self.shadow_vector.shape[1] > 1 and np.abs(self.shadow_vector[:, 1:]).max() > 1.0:
                raise InvariantError("blendshape shadow entries outside [-1, 1]")
        if mesh is not None:
            if self.mesh_hash != mesh.content_hash():
                raise InvariantError("asset mesh hash does not match the given mesh")
            if self.num_points:
                if self.triangle_id.min() < 0 or self.triangle_id.max() >= mesh.num_triangles:
                    raise InvariantError("triangle id out of range for mesh")
                uv = uv_from_cache(mesh, self.triangle_id, self.barycentric)
                err = np.abs(uv - self.uv).max()
                if err > 1e-5:
                    raise InvariantError(f"cached barycentric does not reproduce uv (err {err:.2e})")

    def attribute_matrix(self) -> np.ndarray:
        """Per-point optimizable attributes, one row per point.

        Layout: [offset, log s1, log s2, x, y, opacity logit, sh..., shadow...].
        """
        n = self.num_points
        return np.concatenate([
            self.offset[:, None], self.log_scale, self.rotation,
            self.opacity_logit[:, None], self.sh_color.reshape(n, -1),
            self.shadow_vector], axis=1)

    def set_attribute_matrix(self, attrs: np.ndarray) -> None:
        n = self.num_points
        k = self.sh_color.shape[1] * 3
        attrs = np.asarray(attrs, dtype=np.float32).reshape(n, -1)
        self.offset = attrs[:, 0].copy()
        self.log_scale = attrs[:, 1:3].copy()
        self.rotation = attrs[:, 3:5].copy()
        self.opacity_logit = attrs[:, 5].copy()
        self.sh_color = attrs[:, 6:6 + k].reshape(n, -1, 3).copy()
        self.shadow_vector = attrs[:, 6 + k:].copy()


# ---------------------------------------------------------------------------
# .gfa binary format
#
# header (60 bytes, little-endian):
#   0  magic   "GFA1"
#   4  u16     version (1)
#   6  u8      component label index
#   7  u8      SH degree
#   8  u32     point count N
#   12 u16     blendshape count B
#   14 u16     reserved (0)
#   16 f64     epsilon
#   24 f64     creation density (pixels per point)
#   32 u64     creation seed
#   40 u64     mesh hash
#   48 12x u8  reserved (0)
# body: N records of f32 fields
#   uv(2) offset(1) log_scale(2) rotation(2) opacity_logit(1)
#   sh_color((deg+1)^2 * 3) shadow_vector(B+1) barycentric(2), then u32 triangle id
# tail: u32 CRC32 over header+body

_GFA_MAGIC = b"GFA1"
_GFA_VERSION = 1
_HEADER = struct.Struct("<4sHBBIHHddQQ")  # 48 bytes, then 12 reserved


def save_asset(asset: SplatAsset, path) -> None:
    n = asset.num_points
    b = asset.num_blendshapes
    header = _HEADER.pack(
        _GFA_MAGIC, _GFA_VERSION, COMPONENT_LABELS.index(asset.component_label),
        asset.sh_degree, n, b, 0, asset.epsilon, asset.density, asset.seed,
        asset.mesh_hash) + b"\x00" * 12
    k = asset.sh_color.shape[1]
    floats = np.concatenate([
        asset.uv, asset.offset[:, None], asset.log_scale, asset.rotation,
        asset.opacity_logit[:, None], asset.sh_color.reshape(n, 3 * k),
        asset.shadow_vector, asset.barycentric], axis=1).astype("<f4")
    record = np.empty(n, dtype=[("f", "<f4", floats.shape[1]), ("tri", "<u4")])
    record["f"] = floats
    record["tri"] = asset.triangle_id.astype("<u4")
    payload = header + record.tobytes()
    Path(path).write_bytes(payload + struct.pack("<I", zlib.crc32(payload)))


def load_asset(path) -> SplatAsset:
    blob = Path(path).read_bytes()
    if len(blob) < 64 or blob[:4] != _GFA_MAGIC:
        raise FormatVersionError(f"{path}: not a GFA1 asset file")
    (magic, version, comp, deg, n, b, _pad, eps, density, seed,
     mesh_hash) = _HEADER.unpack(blob[:_HEADER.size])
    if version != _GFA_VERSION:
        raise FormatVersionError(f"{path}: unsupported version {version}")
    stored_crc = struct.unpack("<I", blob[-4:])[0]
    if zlib.crc32(blob[:-4]) != stored_crc:
        raise ChecksumError(f"{path}: CRC mismatch")
    k = (deg + 1) ** 2
    nf = 2 + 1 + 2 + 2 + 1 + 3 * k + (b + 1) + 2
    record = np.frombuffer(blob[60:-4], dtype=[("f", "<f4", nf), ("tri", "<u4")])
    if len(record) != n:
        raise FormatVersionError(f"{path}: body holds {len(record)} records, header says {n}")
    f = record["f"].reshape(n, nf)
    c = 0

    def take(width):
        nonlocal c
        out = f[:, c:c + width]
        c += width
        return out

    return SplatAsset(
        uv=take(2), offset=take(1), log_scale=take(2), rotation=take(2),
        opacity_logit=take(1), sh_color=take(3 * k), shadow_vector=take(b + 1),
        barycentric=f[:, nf - 2:nf], triangle_id=record["tri"].astype(np.int32),
        mesh_hash=mesh_hash, sh_degree=deg, epsilon=eps,
        component_label=COMPONENT_LABELS[comp], density=density, seed=seed)
