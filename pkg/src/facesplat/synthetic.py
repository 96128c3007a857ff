"""Synthetic heads, textures and environment maps for data generation."""

from __future__ import annotations

import numpy as np

from .mesh import FaceMesh
from .textures import PBRTextureSet
from .mesh import rasterize_uv_mask


def unit_quad_mesh() -> FaceMesh:
    """Two triangles spanning [0,1]^2 at z=0; UVs equal vertex xy."""
    vertices = np.asarray([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], dtype=np.float32)
    triangles = np.asarray([[0, 1, 2], [0, 2, 3]], dtype=np.int32)
    uv = vertices[:, :2]
    uv_corners = uv[triangles]
    return FaceMesh(vertices, triangles, uv_corners,
                    np.zeros((0, 4, 3), dtype=np.float32))


def sphere_head(segments: int = 32, rings: int = 16, radius: float = 1.0,
                axes=(1.0, 1.0, 1.0), num_blendshapes: int = 3,
                bump_amplitude: float = 0.12) -> FaceMesh:
    """Sphere mesh with a seam-duplicated lat-long UV atlas (non-overlapping)
    and smooth outward-bump blendshapes.

    A spherical-projection unwrap of a subdivided icosahedron folds over at
    the seam, which the UV layout rules forbid; the lat-long atlas keeps every
    UV triangle disjoint while covering nearly the whole unit square.
    """
    verts = []
    uvs = []
    # interior rings i = 1..rings-1, seam column duplicated (j = 0..segments)
    for i in range(1, rings):
        theta = np.pi * i / rings
        for j in range(segments + 1):
            phi = 2.0 * np.pi * (j % segments) / segments
            verts.append([np.sin(theta) * np.cos(phi),
                          np.sin(theta) * np.sin(phi),
                          np.cos(theta)])
            uvs.append([j / segments, i / rings])
    top = []
    bottom = []
    for j in range(segments):
        top.append(len(verts))
        verts.append([0.0, 0.0, 1.0])
        uvs.append([(j + 0.5) / segments, 0.0])
        bottom.append(len(verts))
        verts.append([0.0, 0.0, -1.0])
        uvs.append([(j + 0.5) / segments, 1.0])
    verts = np.asarray(verts, dtype=np.float64)
    verts = verts * np.asarray(axes, dtype=np.float64)[None, :] * radius
    uvs = np.asarray(uvs, dtype=np.float32)

    def ring_index(i, j):
        return (i - 1) * (segments + 1) + j

    tris = []
    for j in range(segments):
        tris.append([top[j], ring_index(1, j), ring_index(1, j + 1)])
        tris.append([bottom[j], ring_index(rings - 1, j + 1), ring_index(rings - 1, j)])
    for i in range(1, rings - 1):
        for j in range(segments):
            a = ring_index(i, j)
            b = ring_index(i, j + 1)
            c = ring_index(i + 1, j + 1)
            d = ring_index(i + 1, j)
            # wound so face normals point outward
            tris.append([a, d, c])
            tris.append([a, c, b])
    tris = np.asarray(tris, dtype=np.int32)
    uv_corners = uvs[tris]

    deltas = np.zeros((num_blendshapes, len(verts), 3), dtype=np.float32)
    centers = np.asarray([
        [1.0, 0.3, 0.2], [0.6, -0.7, -0.3], [-0.2, 0.8, 0.55],
        [0.1, -0.4, 0.9], [-0.8, -0.1, -0.5],
    ])
    normals = verts / np.linalg.norm(verts, axis=1, keepdims=True)
    for b in range(num_blendshapes):
        c = centers[b % len(centers)]
        c = c / np.linalg.norm(c)
        ang = np.arccos(np.clip(normals @ c, -1.0, 1.0))
        profile = np.exp(-(ang / 0.55) ** 2)
        deltas[b] = (bump_amplitude * radius * profile[:, None] * normals).astype(np.float32)
    return FaceMesh(verts.astype(np.float32), tris, uv_corners, deltas)


def checker_textures(mesh: FaceMesh, resolution: int = 256, squares: int = 8,
                     color_a=(0.78, 0.62, 0.52), color_b=(0.38, 0.30, 0.27),
                     specular_level: float = 0.3) -> PBRTextureSet:
    u = (np.arange(resolution) + 0.5) / resolution
    uu, vv = np.meshgrid(u, u, indexing="ij")
    parity = (np.floor(uu * squares) + np.floor(vv * squares)) % 2
    diffuse = np.where(parity[..., None] > 0.5,
                       np.asarray(color_b, dtype=np.float32),
                       np.asarray(color_a, dtype=np.float32))
    normal = np.full((resolution, resolution, 3), [0.5, 0.5, 1.0], dtype=np.float32)
    specular = np.full((resolution, resolution, 3), specular_level, dtype=np.float32)
    mask = rasterize_uv_mask(mesh, resolution)
    return PBRTextureSet(diffuse.astype(np.float32), normal, specular, mask)


def stripe_textures(mesh: FaceMesh, resolution: int = 256, stripes: int = 10,
                    color_a=(0.25, 0.45, 0.72), color_b=(0.85, 0.80, 0.55),
                    specular_level: float = 0.2) -> PBRTextureSet:
    u = (np.arange(resolution) + 0.5) / resolution
    uu, _ = np.meshgrid(u, u, indexing="ij")
    parity = np.floor(uu * stripes) % 2
    diffuse = np.where(parity[..., None] > 0.5,
                       np.asarray(color_b, dtype=np.float32),
                       np.asarray(color_a, dtype=np.float32))
    normal = np.full((resolution, resolution, 3), [0.5, 0.5, 1.0], dtype=np.float32)
    specular = np.full((resolution, resolution, 3), specular_level, dtype=np.float32)
    mask = rasterize_uv_mask(mesh, resolution)
    return PBRTextureSet(diffuse.astype(np.float32), normal, specular, mask)


def gradient_envmap(width: int = 64, height: int = 32, peak_dir=(0.5, 0.3, 0.8),
                    base: float = 0.35, peak: float = 2.5,
                    tint=(1.0, 0.95, 0.9)) -> np.ndarray:
    """Smooth sky: ambient base plus a broad bright lobe toward `peak_dir`."""
    from .lighting import envmap_directions

    dirs, _ = envmap_directions(width, height)
    d = np.asarray(peak_dir, dtype=np.float64)
    d = d / np.linalg.norm(d)
    lobe = np.clip(dirs @ d, 0.0, 1.0) ** 4
    value = base + peak * lobe
    return (value[..., None] * np.asarray(tint)[None, None, :]).astype(np.float32)


def constant_envmap(width: int = 16, height: int = 8, value=(1.0, 1.0, 1.0)) -> np.ndarray:
    out = np.empty((height, width, 3), dtype=np.float32)
    out[:] = np.asarray(value, dtype=np.float32)
    return out
