"""PCA geometry code for conditioning on head shape."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvariantError
from ..mesh import FaceMesh


@dataclass
class GeometryBasis:
    mean: np.ndarray    # (3V,)
    basis: np.ndarray   # (K, 3V) orthonormal rows

    @property
    def dim(self) -> int:
        return len(self.basis)


def build_geometry_pca(meshes: list[FaceMesh], k: int) -> GeometryBasis:
    """Standard PCA over flattened neutral vertex positions."""
    if len(meshes) < k + 1:
        raise ValueError(f"need at least {k + 1} meshes for {k} components")
    ref = meshes[0]
    for m in meshes[1:]:
        if m.num_vertices != ref.num_vertices or not np.array_equal(
                m.triangles, ref.triangles):
            raise InvariantError("geometry PCA requires shared mesh topology")
    x = np.stack([m.vertices.astype(np.float64).reshape(-1) for m in meshes])
    mean = x.mean(axis=0)
    _, _, vt = np.linalg.svd(x - mean, full_matrices=False)
    return GeometryBasis(mean=mean, basis=vt[:k])


def project_geometry(mesh: FaceMesh, basis: GeometryBasis) -> np.ndarray:
    flat = mesh.vertices.astype(np.float64).reshape(-1)
    if flat.shape != basis.mean.shape:
        raise InvariantError("mesh vertex count does not match the PCA basis")
    return basis.basis @ (flat - basis.mean)


def reconstruct_geometry(code: np.ndarray, basis: GeometryBasis) -> np.ndarray:
    return basis.mean + code @ basis.basis
