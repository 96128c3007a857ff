"""Attach splats to the deforming mesh.

World placement of a point: surface position from its cached triangle +
barycentric, displaced by `offset` along the triangle normal. The local frame
is the triangle frame with an in-plane rotation by the point's unit complex
(x, y); scales are [epsilon, s1, s2] so every splat stays a thin shell.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .asset import SplatAsset
from .errors import InvariantError
from .mesh import ExpressionWeights, FaceMesh


@dataclass
class TriangleFrame:
    normal: np.ndarray    # (3,)
    frame: np.ndarray     # (3, 3), columns [normal, tangent, bitangent]
    area: float


@dataclass
class PosedGaussian:
    world_mean: np.ndarray      # (3,)
    world_rotation: np.ndarray  # (3, 3)
    world_scale: np.ndarray     # (3,) = [epsilon, s1, s2]

    @property
    def covariance(self) -> np.ndarray:
        L = self.world_rotation * self.world_scale[None, :]
        return L @ L.T


def pose_mesh(mesh: FaceMesh, weights: ExpressionWeights, dtype=np.float64) -> np.ndarray:
    """Neutral vertices plus the weighted blendshape deltas."""
    w = np.asarray(weights.weights, dtype=dtype)
    if len(w) != mesh.num_blendshapes:
        raise InvariantError(
            f"weights length {len(w)} != blendshape count {mesh.num_blendshapes}")
    v = mesh.vertices.astype(dtype)
    if len(w) == 0:
        return v.copy()
    return v + np.einsum("b,bvk->vk", w, mesh.blendshape_deltas.astype(dtype))


def triangle_frame(posed_vertices: np.ndarray, triangles: np.ndarray,
                   triangle_id: int) -> TriangleFrame:
    tri = triangles[triangle_id]
    a, b, c = (posed_vertices[tri[k]].astype(np.float64) for k in range(3))
    n = np.cross(b - a, c - a)
    area = 0.5 * np.linalg.norm(n)
    if area <= 1e-12:
        raise InvariantError(f"triangle {triangle_id} is degenerate (area {area:.3e})")
    n = n / (2.0 * area)
    e = b - a
    t = e - (e @ n) * n
    t = t / np.linalg.norm(t)
    bt = np.cross(n, t)
    return TriangleFrame(normal=n, frame=np.stack([n, t, bt], axis=1), area=float(area))


def pose_gaussian(point, mesh: FaceMesh, posed_vertices: np.ndarray,
                  epsilon: float) -> PosedGaussian:
    """Scalar reference path for a single point."""
    tri = mesh.triangles[point.triangle_id]
    w0, w1 = float(point.barycentric[0]), float(point.barycentric[1])
    w2 = 1.0 - w0 - w1
    a = posed_vertices[tri[0]].astype(np.float64)
    b = posed_vertices[tri[1]].astype(np.float64)
    c = posed_vertices[tri[2]].astype(np.float64)
    fr = triangle_frame(posed_vertices, mesh.triangles, point.triangle_id)
    mean = w0 * a + w1 * b + w2 * c + float(point.offset) * fr.normal
    x, y = point.rotation
    norm = float(np.hypot(x, y))
    x, y = x / norm, y / norm
    r0, r1, r2 = fr.frame[:, 0], fr.frame[:, 1], fr.frame[:, 2]
    rot = np.stack([r0, x * r1 + y * r2, -y * r1 + x * r2], axis=1)
    scale = np.asarray([epsilon, *np.exp(np.asarray(point.log_scale, dtype=np.float64))])
    return PosedGaussian(mean, rot, scale)


def pose_points(asset: SplatAsset, mesh: FaceMesh, posed_vertices: np.ndarray):
    """Batched pose of all points: (means (N,3), rotations (N,3,3), scales (N,3))."""
    if asset.mesh_hash != mesh.content_hash():
        raise InvariantError("asset was initialized on a different mesh (hash mismatch)")
    dtype = posed_vertices.dtype if posed_vertices.dtype == np.float64 else np.float64
    v = posed_vertices.astype(dtype)
    tris = mesh.triangles[asset.triangle_id]          # (N, 3)
    a, b, c = v[tris[:, 0]], v[tris[:, 1]], v[tris[:, 2]]
    w0 = asset.barycentric[:, 0:1].astype(dtype)
    w1 = asset.barycentric[:, 1:2].astype(dtype)
    w2 = 1.0 - w0 - w1
    n = np.cross(b - a, c - a)
    nrm = np.linalg.norm(n, axis=1, keepdims=True)
    if (nrm <= 2e-12).any():
        raise InvariantError("posed mesh has a degenerate triangle under some point")
    n = n / nrm
    e = b - a
    t = e - (e * n).sum(axis=1, keepdims=True) * n
    t = t / np.linalg.norm(t, axis=1, keepdims=True)
    bt = np.cross(n, t)
    means = w0 * a + w1 * b + w2 * c + asset.offset[:, None].astype(dtype) * n
    rot_xy = asset.rotation.astype(dtype)
    rot_xy = rot_xy / np.linalg.norm(rot_xy, axis=1, keepdims=True)
    x, y = rot_xy[:, 0:1], rot_xy[:, 1:2]
    rotations = np.stack([n, x * t + y * bt, -y * t + x * bt], axis=2)
    scales = np.concatenate(
        [np.full((asset.num_points, 1), asset.epsilon, dtype=dtype),
         np.exp(asset.log_scale.astype(dtype))], axis=1)
    return means, rotations, scales


def pose_asset(asset: SplatAsset, mesh: FaceMesh,
               weights: ExpressionWeights) -> list[PosedGaussian]:
    """Pose every point; output order equals point order."""
    posed_vertices = pose_mesh(mesh, weights)
    means, rotations, scales = pose_points(asset, mesh, posed_vertices)
    return [PosedGaussian(means[i], rotations[i], scales[i]) for i in range(asset.num_points)]


# ---------------------------------------------------------------------------
# torch path (differentiable in offset, rotation, log scales)

class RigBuffers:
    """Per-asset constants for the differentiable pose path."""

    def __init__(self, asset: SplatAsset, mesh: FaceMesh, dtype=torch.float32):
        if asset.mesh_hash != mesh.content_hash():
            raise InvariantError("asset was initialized on a different mesh (hash mismatch)")
        self._init(mesh, asset.triangle_id, asset.barycentric, asset.epsilon, dtype)

    @classmethod
    def from_points(cls, mesh: FaceMesh, triangle_ids: np.ndarray,
                    barycentric: np.ndarray, epsilon: float,
                    dtype=torch.float32) -> "RigBuffers":
        rig = cls.__new__(cls)
        rig._init(mesh, triangle_ids, barycentric, epsilon, dtype)
        return rig

    def _init(self, mesh, triangle_ids, barycentric, epsilon, dtype):
        tris = mesh.triangles[triangle_ids]
        self.tri_vertex_ids = torch.from_numpy(tris.astype(np.int64))
        w0 = barycentric[:, 0]
        w1 = barycentric[:, 1]
        w = np.stack([w0, w1, 1.0 - w0 - w1], axis=1)
        self.bary = torch.from_numpy(np.ascontiguousarray(w)).to(dtype)
        self.epsilon = epsilon
        self.dtype = dtype

    def posed_vertices(self, mesh: FaceMesh, weights: ExpressionWeights) -> torch.Tensor:
        return torch.from_numpy(np.ascontiguousarray(pose_mesh(mesh, weights))).to(self.dtype)


def pose_points_torch(rig: RigBuffers, posed_vertices: torch.Tensor, offset: torch.Tensor,
                      rotation: torch.Tensor, log_scale: torch.Tensor):
    """Torch twin of :func:`pose_points`: (means, rotations, scales)."""
    pts = posed_vertices[rig.tri_vertex_ids]               # (N, 3, 3)
    a, b, c = pts[:, 0], pts[:, 1], pts[:, 2]
    n = torch.cross(b - a, c - a, dim=1)
    n = n / torch.linalg.norm(n, dim=1, keepdim=True)
    e = b - a
    t = e - (e * n).sum(dim=1, keepdim=True) * n
    t = t / torch.linalg.norm(t, dim=1, keepdim=True)
    bt = torch.cross(n, t, dim=1)
    surface = (rig.bary.unsqueeze(-1) * pts).sum(dim=1)
    means = surface + offset.unsqueeze(-1) * n
    rxy = rotation / torch.linalg.norm(rotation, dim=1, keepdim=True)
    x, y = rxy[:, 0:1], rxy[:, 1:2]
    rotations = torch.stack([n, x * t + y * bt, -y * t + x * bt], dim=2)
    eps_col = torch.full_like(offset.unsqueeze(-1), rig.epsilon)
    scales = torch.cat([eps_col, torch.exp(log_scale)], dim=1)
    return means, rotations, scales
