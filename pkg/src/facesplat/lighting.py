"""Environment lighting: SH decomposition, irradiance, light sampling, shadow bake.

Equirectangular convention: row i -> polar angle theta = pi*(i+0.5)/H from +z,
column j -> azimuth phi = 2*pi*(j+0.5)/W from +x toward +y.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import sh
from .errors import InvariantError
from .mesh import FaceMesh, UvIndex, rasterize_uv_mask, vertex_normals
from .raycast import visibility_matrix

ENV_SH_ORDER = 12  # bands 0..12 -> 169 coefficients per channel


def envmap_directions(width: int, height: int):
    """Unit directions (H, W, 3) and per-texel solid angles (H, W)."""
    theta = np.pi * (np.arange(height) + 0.5) / height
    phi = 2.0 * np.pi * (np.arange(width) + 0.5) / width
    st, ct = np.sin(theta), np.cos(theta)
    dirs = np.empty((height, width, 3))
    dirs[:, :, 0] = st[:, None] * np.cos(phi)[None, :]
    dirs[:, :, 1] = st[:, None] * np.sin(phi)[None, :]
    dirs[:, :, 2] = ct[:, None] * np.ones_like(phi)[None, :]
    omega = (st * (np.pi / height) * (2.0 * np.pi / width))[:, None].repeat(width, axis=1)
    return dirs, omega


def decompose_envmap(env_map: np.ndarray, order: int, theta_nodes: int = 6) -> np.ndarray:
    """Solid-angle-weighted SH projection of the radiance map, (3, (order+1)^2).

    Radiance is piecewise constant per texel. The basis separates into a
    latitude part (integrated per row with Gauss-Legendre sub-nodes) and an
    azimuthal sin/cos part (integrated analytically per column), so the result
    is the exact projection of the piecewise-constant radiance up to the
    latitude quadrature error (~1e-10 at the default node count).
    """
    env_map = np.asarray(env_map, dtype=np.float64)
    h, w, _ = env_map.shape
    k_total = (order + 1) ** 2
    nodes, weights = np.polynomial.legendre.leggauss(theta_nodes)

    # latitude factors per row: evaluating the basis at phi=0 gives
    # norm * (sqrt2 if m>0) * P_l^m(cos t); multiply by sin(t) dt weights
    theta_f = np.zeros((h, k_total))
    for i in range(h):
        t0, t1 = np.pi * i / h, np.pi * (i + 1) / h
        tg = 0.5 * (t1 - t0) * nodes + 0.5 * (t0 + t1)
        wg = 0.5 * (t1 - t0) * weights
        dirs = np.stack([np.sin(tg), np.zeros_like(tg), np.cos(tg)], axis=1)
        basis0 = sh.eval_sh_basis(dirs, order)                     # (G, K)
        theta_f[i] = (wg * np.sin(tg)) @ basis0

    # analytic azimuthal integrals of cos(m phi) / sin(m phi) per column
    edges = 2.0 * np.pi * np.arange(w + 1) / w
    az_cos = np.zeros((order + 1, w))
    az_sin = np.zeros((order + 1, w))
    az_cos[0] = 2.0 * np.pi / w
    for m in range(1, order + 1):
        az_cos[m] = (np.sin(m * edges[1:]) - np.sin(m * edges[:-1])) / m
        az_sin[m] = (np.cos(m * edges[:-1]) - np.cos(m * edges[1:])) / m
    row_cos = np.einsum("hwc,mw->hmc", env_map, az_cos)            # (H, order+1, 3)
    row_sin = np.einsum("hwc,mw->hmc", env_map, az_sin)

    coeffs = np.zeros((3, k_total))
    for l in range(order + 1):
        for m in range(0, l + 1):
            j = l * (l + 1) + m
            coeffs[:, j] = theta_f[:, j] @ row_cos[:, m]
            if m > 0:
                coeffs[:, l * (l + 1) - m] = theta_f[:, j] @ row_sin[:, m]
    return coeffs


def eval_env_sh(coeffs: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """Reconstruct radiance from SH coefficients at unit directions."""
    coeffs = np.asarray(coeffs, dtype=np.float64)
    order = int(np.sqrt(coeffs.shape[1])) - 1
    return sh.eval_sh_basis(dirs, order) @ coeffs.T


def irradiance(coeffs: np.ndarray, normals: np.ndarray, degree: int | None = None) -> np.ndarray:
    """Cosine-hemisphere irradiance per normal from env SH, (N, 3)."""
    coeffs = np.asarray(coeffs, dtype=np.float64)
    max_order = int(np.sqrt(coeffs.shape[1])) - 1
    degree = max_order if degree is None else min(degree, max_order)
    k = (degree + 1) ** 2
    kernel = sh.band_expand(sh.lambert_kernel(degree))
    basis = sh.eval_sh_basis(normals, degree)
    return basis @ (coeffs[:, :k] * kernel[None, :]).T


def sample_env_lights(env_map: np.ndarray, k: int, seed: int = 0):
    """Importance-sample k texel directions by luminance.

    Returns (dirs (k,3), rgb_weights (k,3)) with sum_k w_k * f(dir_k)
    approximating the integral of radiance * f over the sphere.
    """
    env_map = np.asarray(env_map, dtype=np.float64)
    h, w, _ = env_map.shape
    dirs, omega = envmap_directions(w, h)
    lum = env_map @ np.asarray([0.2126, 0.7152, 0.0722])
    weight = (lum * omega).reshape(-1)
    total = weight.sum()
    if total <= 0.0:
        return np.zeros((0, 3)), np.zeros((0, 3))
    p = weight / total
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(p), size=k, p=p)
    sampled_dirs = dirs.reshape(-1, 3)[idx]
    rgb = env_map.reshape(-1, 3)[idx]
    lum_s = np.maximum(lum.reshape(-1)[idx], 1e-20)
    weights = total * rgb / lum_s[:, None] / k
    return sampled_dirs, weights


@dataclass
class Lighting:
    env_map: np.ndarray                  # (H, W, 3) linear, >= 0
    env_sh: np.ndarray                   # (3, 169)
    shadow_map: np.ndarray               # (r, r) in [0, 1], UV space
    light_seed: int = 0
    _light_cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.env_map = np.ascontiguousarray(self.env_map, dtype=np.float32)
        self.env_sh = np.ascontiguousarray(self.env_sh, dtype=np.float64)
        self.shadow_map = np.ascontiguousarray(self.shadow_map, dtype=np.float32)

    def validate(self) -> None:
        if not np.isfinite(self.env_map).all() or self.env_map.min() < 0.0:
            raise InvariantError("environment map must be finite and non-negative")
        if self.env_sh.shape != (3, (ENV_SH_ORDER + 1) ** 2):
            raise InvariantError(
                f"env SH must be 3x{(ENV_SH_ORDER + 1) ** 2}, got {self.env_sh.shape}")
        if self.shadow_map.size and (self.shadow_map.min() < 0.0 or self.shadow_map.max() > 1.0):
            raise InvariantError("shadow map values outside [0, 1]")

    @classmethod
    def build(cls, env_map: np.ndarray, mesh: FaceMesh | None = None,
              shadow_resolution: int = 64, k_dirs: int = 32, seed: int = 0) -> "Lighting":
        env_sh = decompose_envmap(env_map, ENV_SH_ORDER)
        if mesh is not None:
            shadow = bake_shadow_map(mesh, env_map, shadow_resolution, k_dirs=k_dirs, seed=seed)
        else:
            shadow = np.ones((shadow_resolution, shadow_resolution), dtype=np.float32)
        return cls(env_map, env_sh, shadow, light_seed=seed)

    def sampled_lights(self, k: int = 24):
        key = k
        if key not in self._light_cache:
            self._light_cache[key] = sample_env_lights(self.env_map, k, seed=self.light_seed)
        return self._light_cache[key]


def bake_shadow_map(mesh: FaceMesh, env_map: np.ndarray, resolution: int,
                    k_dirs: int = 32, seed: int = 0) -> np.ndarray:
    """Per-UV-texel fraction of sampled light directions the neutral mesh leaves
    unoccluded. Texels outside the UV coverage get 1."""
    if resolution > 512:
        raise ValueError("shadow map resolution capped at 512")
    mask = rasterize_uv_mask(mesh, resolution)
    out = np.ones((resolution, resolution), dtype=np.float32)
    if not mask.any():
        return out
    dirs, _ = sample_env_lights(env_map, k_dirs, seed=seed)
    if len(dirs) == 0:
        return out
    iu, iv = np.where(mask)
    uv = np.stack([(iu + 0.5) / resolution, (iv + 0.5) / resolution], axis=1)
    tri_ids, bary = UvIndex(mesh).locate(uv)
    ok = tri_ids >= 0
    tris = mesh.triangles[tri_ids[ok]]
    w0 = bary[ok, 0:1].astype(np.float64)
    w1 = bary[ok, 1:2].astype(np.float64)
    w2 = 1.0 - w0 - w1
    verts = mesh.vertices.astype(np.float64)
    points = w0 * verts[tris[:, 0]] + w1 * verts[tris[:, 1]] + w2 * verts[tris[:, 2]]
    vn = vertex_normals(verts, mesh.triangles)
    normals = w0 * vn[tris[:, 0]] + w1 * vn[tris[:, 1]] + w2 * vn[tris[:, 2]]
    normals /= np.maximum(np.linalg.norm(normals, axis=1, keepdims=True), 1e-12)
    vis = visibility_matrix(points, normals, dirs, verts, mesh.triangles).mean(axis=1)
    out[iu[ok], iv[ok]] = vis
    out[iu[~ok], iv[~ok]] = 1.0
    return out
