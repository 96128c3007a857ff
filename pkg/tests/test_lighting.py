import math

import numpy as np
import pytest

from facesplat import sh
from facesplat.errors import InvariantError
from facesplat.lighting import (Lighting, bake_shadow_map, decompose_envmap,
                                envmap_directions, eval_env_sh, irradiance,
                                sample_env_lights)
from facesplat.synthetic import constant_envmap, gradient_envmap, sphere_head, unit_quad_mesh
from oracles import sphere_quadrature


def test_constant_map_projects_to_dc_only():
    env = constant_envmap(width=64, height=32, value=(0.7, 0.7, 0.7))
    coeffs = decompose_envmap(env, 12)
    assert abs(coeffs[0, 0] - 0.7 * math.sqrt(4 * math.pi)) < 1e-6
    assert np.abs(coeffs[:, 1:]).max() < 1e-6


def test_single_texel_projects_to_basis_times_quadrature():
    # one lit texel: coefficients equal the radiance times the integral of the
    # basis over that texel's footprint, computed here by dense sub-quadrature
    h, w = 32, 64
    env = np.zeros((h, w, 3), dtype=np.float32)
    iy, ix = 10, 21
    env[iy, ix] = (2.0, 1.0, 0.5)
    coeffs = decompose_envmap(env, 8)

    sub = 200
    tt = np.pi * (iy + (np.arange(sub) + 0.5) / sub) / h
    pp = 2 * np.pi * (ix + (np.arange(sub) + 0.5) / sub) / w
    tg, pg = np.meshgrid(tt, pp, indexing="ij")
    dirs = np.stack([np.sin(tg) * np.cos(pg), np.sin(tg) * np.sin(pg),
                     np.cos(tg)], axis=-1).reshape(-1, 3)
    dw = np.sin(tg).reshape(-1) * (np.pi / (h * sub)) * (2 * np.pi / (w * sub))
    basis_int = sh.eval_sh_basis(dirs, 8).T @ dw
    expected = np.outer(env[iy, ix], basis_int)
    assert np.abs(coeffs - expected).max() < 1e-7


def test_order_12_gives_169_coefficients():
    env = constant_envmap()
    assert decompose_envmap(env, 12).shape == (3, 169)


def test_reconstruction_error_non_increasing_in_order():
    rng = np.random.default_rng(5)
    for trial in range(3):
        env = rng.uniform(0.0, 2.0, size=(16, 32, 3)).astype(np.float32)
        # compare against a smooth band-limited target: reconstruction of the
        # order-12 projection evaluated on the grid
        dirs, omega = envmap_directions(32, 16)
        flat = dirs.reshape(-1, 3)
        full = decompose_envmap(env, 12)
        errs = []
        for order in (0, 2, 4, 8, 12):
            coeffs = full[:, :(order + 1) ** 2]
            recon = eval_env_sh(coeffs, flat)
            err = ((recon - env.reshape(-1, 3)) ** 2
                   * omega.reshape(-1, 1)).sum()
            errs.append(err)
        assert all(errs[i + 1] <= errs[i] + 1e-12 for i in range(len(errs) - 1))


def test_irradiance_matches_clamped_cosine_quadrature():
    env = gradient_envmap(32, 16)
    coeffs = decompose_envmap(env, 12)
    rng = np.random.default_rng(11)
    normals = rng.normal(size=(4, 3))
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    got = irradiance(coeffs, normals)

    dirs, omega = envmap_directions(32, 16)
    flat_d = dirs.reshape(-1, 3)
    flat_e = env.reshape(-1, 3).astype(np.float64)
    w = omega.reshape(-1, 1)
    for i, n in enumerate(normals):
        cos = np.clip(flat_d @ n, 0.0, None)[:, None]
        ref = (flat_e * cos * w).sum(axis=0)
        # band-12 truncation of the cosine kernel leaves a small residual
        assert np.abs(got[i] - ref).max() < 0.02 * max(ref.max(), 1e-9) + 2e-3


def test_lighting_validation():
    env = constant_envmap()
    light = Lighting.build(env)
    light.validate()
    bad = Lighting(env, np.zeros((3, 100)), np.ones((4, 4)))
    with pytest.raises(InvariantError):
        bad.validate()
    neg = Lighting(-1.0 * env, light.env_sh, light.shadow_map)
    with pytest.raises(InvariantError):
        neg.validate()


def test_sample_env_lights_deterministic_and_weighted():
    env = gradient_envmap(32, 16)
    d1, w1 = sample_env_lights(env, 16, seed=3)
    d2, w2 = sample_env_lights(env, 16, seed=3)
    assert np.array_equal(d1, d2) and np.array_equal(w1, w2)
    # integral estimate of total radiance: sum w_k * 1 ~= integral of L
    dirs, omega = envmap_directions(32, 16)
    total = (env.reshape(-1, 3) * omega.reshape(-1, 1)).sum(axis=0)
    est = w1.sum(axis=0)
    assert np.abs(est - total).max() < 0.35 * total.max()


def test_shadow_bake_convex_sphere_at_least_half():
    mesh = sphere_head(segments=12, rings=6, num_blendshapes=0)
    env = constant_envmap()
    shadow = bake_shadow_map(mesh, env, resolution=24, k_dirs=48, seed=0)
    from facesplat.mesh import rasterize_uv_mask
    mask = rasterize_uv_mask(mesh, 24)
    assert shadow[mask].min() >= 0.5 - 0.17  # hemisphere fraction minus sampling noise
    assert (shadow[~mask] == 1.0).all()


def test_shadow_bake_flat_quad_fully_lit():
    mesh = unit_quad_mesh()
    # light strictly from +z (top rows of the equirect map)
    env = np.zeros((8, 16, 3), dtype=np.float32)
    env[0, :] = 10.0
    shadow = bake_shadow_map(mesh, env, resolution=16, k_dirs=8, seed=0)
    assert (shadow == 1.0).all()


def test_shadow_bake_occluder_blocks():
    quad = unit_quad_mesh()
    vertices = np.concatenate([
        quad.vertices,
        quad.vertices + np.asarray([0, 0, 0.5], dtype=np.float32)], axis=0)
    triangles = np.concatenate([quad.triangles, quad.triangles + 4], axis=0)
    # occluder triangles reuse the same UV region is not allowed; shift them
    uv_occ = quad.uv_corners * 0.0 + np.asarray([[0.98, 0.98]], dtype=np.float32)
    from facesplat.mesh import FaceMesh
    mesh = FaceMesh(vertices, triangles,
                    np.concatenate([quad.uv_corners * np.float32(0.9),
                                    uv_occ + np.asarray([[[0], [0.005], [0.01]]],
                                                        dtype=np.float32) * 1.0], axis=0),
                    np.zeros((0, 8, 3)))
    env = np.zeros((8, 16, 3), dtype=np.float32)
    env[0, :] = 10.0
    shadow = bake_shadow_map(mesh, env, resolution=16, k_dirs=8, seed=0)
    # texels under the occluder (lower-left 90% of UV) are black
    assert shadow[2:12, 2:12].max() == 0.0


def test_shadow_resolution_cap():
    with pytest.raises(ValueError):
        bake_shadow_map(unit_quad_mesh(), constant_envmap(), resolution=1024)
