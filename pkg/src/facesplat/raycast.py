"""Vectorized any-hit ray/mesh intersection (Moller-Trumbore)."""

from __future__ import annotations

import numpy as np

_EPS = 1e-9


def any_hit(origins: np.ndarray, directions: np.ndarray, vertices: np.ndarray,
            triangles: np.ndarray, t_min: float = 1e-4, t_max: float = np.inf,
            tri_chunk: int = 512, ray_chunk: int = 8192) -> np.ndarray:
    """True per ray when any triangle is hit with t in (t_min, t_max).

    `directions` may be (3,) shared or (N, 3) per ray; not normalized is fine
    (t is measured in direction lengths).
    """
    origins = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
    directions = np.broadcast_to(
        np.asarray(directions, dtype=np.float64), origins.shape).reshape(-1, 3)
    v0 = vertices[triangles[:, 0]].astype(np.float64)
    e1 = vertices[triangles[:, 1]].astype(np.float64) - v0
    e2 = vertices[triangles[:, 2]].astype(np.float64) - v0
    n_rays = len(origins)
    blocked = np.zeros(n_rays, dtype=bool)
    for r0 in range(0, n_rays, ray_chunk):
        r1 = min(r0 + ray_chunk, n_rays)
        o = origins[r0:r1]
        d = directions[r0:r1]
        live = ~blocked[r0:r1]
        for f0 in range(0, len(v0), tri_chunk):
            if not live.any():
                break
            f1 = min(f0 + tri_chunk, len(v0))
            hit = _mt_block(o[live], d[live], v0[f0:f1], e1[f0:f1], e2[f0:f1], t_min, t_max)
            idx = np.where(live)[0][hit]
            blocked[r0 + idx] = True
            live[idx] = False
    return blocked


def _mt_block(o, d, v0, e1, e2, t_min, t_max):
    # o, d: (R, 3); v0, e1, e2: (F, 3) -> (R,) any-hit over the F block
    p = np.cross(d[:, None, :], e2[None, :, :])           # (R, F, 3)
    det = np.einsum("fk,rfk->rf", e1, p)
    inv = np.where(np.abs(det) > _EPS, 1.0 / np.where(det == 0, 1.0, det), 0.0)
    s = o[:, None, :] - v0[None, :, :]
    u = np.einsum("rfk,rfk->rf", s, p) * inv
    q = np.cross(s, e1[None, :, :])
    v = np.einsum("rk,rfk->rf", d, q) * inv
    t = np.einsum("fk,rfk->rf", e2, q) * inv
    ok = (np.abs(det) > _EPS) & (u >= 0.0) & (v >= 0.0) & (u + v <= 1.0)
    ok &= (t > t_min) & (t < t_max)
    return ok.any(axis=1)


def visibility_matrix(points: np.ndarray, normals: np.ndarray, light_dirs: np.ndarray,
                      vertices: np.ndarray, triangles: np.ndarray,
                      offset: float = 1e-3) -> np.ndarray:
    """0/1 reachability of each light direction from each surface point.

    Directions below the local tangent plane count as occluded. Origins are
    nudged along the normal to dodge self-intersection.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    normals = np.asarray(normals, dtype=np.float64).reshape(-1, 3)
    origins = points + offset * normals
    k = len(light_dirs)
    visible = np.zeros((len(points), k), dtype=np.float64)
    for j in range(k):
        d = light_dirs[j]
        above = (normals @ d) > 0.0
        vis = np.zeros(len(points), dtype=bool)
        if above.any():
            vis[above] = ~any_hit(origins[above], d, vertices, triangles)
        visible[:, j] = vis
    return visible
