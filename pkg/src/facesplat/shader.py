"""Deterministic reference shader for target-image generation.

Software-rasterizes the posed mesh, shades with SH-lit Lambertian diffuse,
Blinn-Phong specular from luminance-sampled environment lights, tangent-space
normal perturbation and a ray-cast visibility term on the deformed pose, then
gamma-encodes. Same inputs give bit-identical images.
"""

from __future__ import annotations

import numpy as np

from .camera import Camera
from .lighting import Lighting, irradiance
from .mesh import ExpressionWeights, FaceMesh, vertex_normals
from .raycast import visibility_matrix
from .rigging import pose_mesh
from .textures import PBRTextureSet, sample_bilinear
from .images import gamma_encode

_LUM = np.asarray([0.2126, 0.7152, 0.0722])

# per-vertex visibility cache keyed by (mesh hash, weights bytes, env id, k)
_vis_cache: dict = {}


def rasterize_mesh(posed_vertices: np.ndarray, triangles: np.ndarray, camera: Camera):
    """Z-buffered triangle rasterization with perspective-correct barycentrics.

    Returns (tri_id (H,W) int32 with -1 for background, bary (H,W,3) f64).
    Triangles with any vertex at or behind the near plane are skipped.
    """
    h, w = camera.height, camera.width
    tri_id = np.full((h, w), -1, dtype=np.int32)
    bary = np.zeros((h, w, 3))
    zbuf = np.full((h, w), np.inf)
    t_cam = camera.world_to_camera(posed_vertices.astype(np.float64))
    z = t_cam[:, 2]
    f = camera.focal
    cx, cy = camera.principal
    sx = f * t_cam[:, 0] / np.where(z > camera.near, z, 1.0) + cx
    sy = f * t_cam[:, 1] / np.where(z > camera.near, z, 1.0) + cy
    for t in range(len(triangles)):
        vi = triangles[t]
        if (z[vi] <= camera.near).any():
            continue
        xs, ys = sx[vi], sy[vi]
        x_lo = max(int(np.floor(xs.min() - 0.5)), 0)
        x_hi = min(int(np.ceil(xs.max() - 0.5)) + 1, w)
        y_lo = max(int(np.floor(ys.min() - 0.5)), 0)
        y_hi = min(int(np.ceil(ys.max() - 0.5)) + 1, h)
        if x_lo >= x_hi or y_lo >= y_hi:
            continue
        px = np.arange(x_lo, x_hi) + 0.5
        py = np.arange(y_lo, y_hi) + 0.5
        gx, gy = np.meshgrid(px, py, indexing="xy")
        d = (xs[1] - xs[0]) * (ys[2] - ys[0]) - (ys[1] - ys[0]) * (xs[2] - xs[0])
        if abs(d) < 1e-12:
            continue
        w1 = ((gx - xs[0]) * (ys[2] - ys[0]) - (gy - ys[0]) * (xs[2] - xs[0])) / d
        w2 = ((xs[1] - xs[0]) * (gy - ys[0]) - (ys[1] - ys[0]) * (gx - xs[0])) / d
        w0 = 1.0 - w1 - w2
        inside = (w0 >= 0) & (w1 >= 0) & (w2 >= 0)
        if not inside.any():
            continue
        iz = w0 / z[vi[0]] + w1 / z[vi[1]] + w2 / z[vi[2]]
        depth = 1.0 / iz
        rows = np.arange(y_lo, y_hi)[:, None].repeat(x_hi - x_lo, axis=1)
        cols = np.arange(x_lo, x_hi)[None, :].repeat(y_hi - y_lo, axis=0)
        win = inside & (depth < zbuf[y_lo:y_hi, x_lo:x_hi])
        if not win.any():
            continue
        r, c = rows[win], cols[win]
        zbuf[r, c] = depth[win]
        tri_id[r, c] = t
        pw0 = (w0[win] / z[vi[0]]) * depth[win]
        pw1 = (w1[win] / z[vi[1]]) * depth[win]
        bary[r, c, 0] = pw0
        bary[r, c, 1] = pw1
        bary[r, c, 2] = 1.0 - pw0 - pw1
    return tri_id, bary


def _tangent_frames(posed, triangles, uv_corners):
    """Per-triangle (tangent, bitangent) from UV gradients."""
    a = posed[triangles[:, 0]]
    b = posed[triangles[:, 1]]
    c = posed[triangles[:, 2]]
    dp1, dp2 = b - a, c - a
    du1 = (uv_corners[:, 1] - uv_corners[:, 0]).astype(np.float64)
    du2 = (uv_corners[:, 2] - uv_corners[:, 0]).astype(np.float64)
    det = du1[:, 0] * du2[:, 1] - du1[:, 1] * du2[:, 0]
    r = 1.0 / np.where(np.abs(det) < 1e-15, 1.0, det)
    tangent = (dp1 * du2[:, 1:2] - dp2 * du1[:, 1:2]) * r[:, None]
    bitangent = (dp2 * du1[:, 0:1] - dp1 * du2[:, 0:1]) * r[:, None]
    return tangent, bitangent


def _vertex_shadow(mesh: FaceMesh, posed, lighting: Lighting, k: int) -> np.ndarray:
    """Luminance-weighted unoccluded fraction of the lights each vertex can
    face; horizon-clipped directions do not count as occlusion (the cosine
    term already handles them)."""
    key = (mesh.content_hash(), posed.astype(np.float32).tobytes(),
           id(lighting.env_map), lighting.light_seed, k)
    if key not in _vis_cache:
        dirs, weights = lighting.sampled_lights(k)
        vn = vertex_normals(posed, mesh.triangles)
        if len(dirs) == 0:
            _vis_cache[key] = np.ones(len(posed))
        else:
            vis = visibility_matrix(posed, vn, dirs, posed, mesh.triangles)
            above = (vn @ dirs.T) > 0.0
            lum = np.maximum(weights @ _LUM, 1e-12)
            reachable = above @ lum
            shadow = np.where(reachable > 0.0, (vis @ lum) / np.maximum(reachable, 1e-12), 1.0)
            _vis_cache[key] = np.clip(shadow, 0.0, 1.0)
        if len(_vis_cache) > 64:
            _vis_cache.pop(next(iter(_vis_cache)))
    return _vis_cache[key]


def reference_render(mesh: FaceMesh, textures: PBRTextureSet, lighting: Lighting,
                     weights: ExpressionWeights, camera: Camera,
                     background=(0.0, 0.0, 0.0), *, k_lights: int = 24,
                     shininess: float = 32.0, specular_strength: float = 0.5,
                     encode: bool = True) -> np.ndarray:
    """Shade the posed mesh; returns (H, W, 3) float32, gamma 2.2 encoded
    unless `encode` is False (then linear, clipped to [0, 1])."""
    posed = pose_mesh(mesh, weights)
    tri_id, bary = rasterize_mesh(posed, mesh.triangles, camera)
    h, w = camera.height, camera.width
    out = np.zeros((h, w, 3))
    out[:] = np.asarray(background, dtype=np.float64)
    covered = tri_id >= 0
    if covered.any():
        tid = tri_id[covered]
        wgt = bary[covered]                                     # (P, 3)
        tris = mesh.triangles[tid]                              # (P, 3)
        pos = np.einsum("pk,pkj->pj", wgt, posed[tris])
        vn = vertex_normals(posed, mesh.triangles)
        n = np.einsum("pk,pkj->pj", wgt, vn[tris])
        n /= np.maximum(np.linalg.norm(n, axis=1, keepdims=True), 1e-12)
        uv = np.einsum("pk,pkj->pj", wgt, mesh.uv_corners[tid].astype(np.float64))

        tangent, bitangent = _tangent_frames(posed, mesh.triangles, mesh.uv_corners)
        t = tangent[tid]
        t = t - (t * n).sum(axis=1, keepdims=True) * n
        t /= np.maximum(np.linalg.norm(t, axis=1, keepdims=True), 1e-12)
        bt = np.cross(n, t)
        flip = np.sign((bt * bitangent[tid]).sum(axis=1, keepdims=True))
        bt = bt * np.where(flip == 0, 1.0, flip)
        nm = sample_bilinear(textures.normal, uv) * 2.0 - 1.0
        nm /= np.maximum(np.linalg.norm(nm, axis=1, keepdims=True), 1e-12)
        n_shade = nm[:, 0:1] * t + nm[:, 1:2] * bt + nm[:, 2:3] * n
        n_shade /= np.maximum(np.linalg.norm(n_shade, axis=1, keepdims=True), 1e-12)

        albedo = sample_bilinear(textures.diffuse, uv)
        color = albedo * irradiance(lighting.env_sh, n_shade) / np.pi

        dirs, lw = lighting.sampled_lights(k_lights)
        if len(dirs) and specular_strength > 0.0:
            view = camera.position[None, :] - pos
            view /= np.maximum(np.linalg.norm(view, axis=1, keepdims=True), 1e-12)
            spec = np.zeros_like(color)
            for j in range(len(dirs)):
                ldir = dirs[j]
                nl = n_shade @ ldir
                half = view + ldir[None, :]
                half /= np.maximum(np.linalg.norm(half, axis=1, keepdims=True), 1e-12)
                nh = np.clip((n_shade * half).sum(axis=1), 0.0, None)
                spec += lw[j][None, :] * (nh ** shininess * (nl > 0.0))[:, None]
            color = color + specular_strength * sample_bilinear(textures.specular, uv) * spec

        shadow_v = _vertex_shadow(mesh, posed, lighting, k_lights)
        shadow = np.einsum("pk,pk->p", wgt, shadow_v[tris])
        out[covered] = color * np.clip(shadow, 0.0, 1.0)[:, None]
    if encode:
        return gamma_encode(out).astype(np.float32)
    return np.clip(out, 0.0, 1.0).astype(np.float32)
