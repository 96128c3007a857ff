import numpy as np
import pytest
import torch

from facesplat.asset import SplatAsset, logit
from facesplat.mesh import UvIndex
from facesplat.synthetic import (checker_textures, constant_envmap, sphere_head,
                                 unit_quad_mesh)


@pytest.fixture(autouse=True)
def _seed_torch():
    torch.manual_seed(0)


@pytest.fixture
def quad_mesh():
    return unit_quad_mesh()


@pytest.fixture(scope="session")
def small_sphere():
    return sphere_head(segments=16, rings=8, num_blendshapes=2)


@pytest.fixture(scope="session")
def sphere_textures(small_sphere):
    return checker_textures(small_sphere, resolution=64, squares=4)


def make_random_asset(mesh, n, rng, sh_degree=1, extra_blendshapes=None):
    """Random but invariant-satisfying asset anchored on `mesh`."""
    b = mesh.num_blendshapes if extra_blendshapes is None else extra_blendshapes
    index = UvIndex(mesh)
    uv_all = rng.uniform(0.05, 0.95, size=(4 * n, 2))
    tri, bary = index.locate(uv_all)
    ok = np.where(tri >= 0)[0][:n]
    assert len(ok) == n, "not enough random points landed on the mesh"
    uv, tri, bary = uv_all[ok], tri[ok], bary[ok]
    k = (sh_degree + 1) ** 2
    rot = rng.normal(size=(n, 2))
    rot /= np.linalg.norm(rot, axis=1, keepdims=True)
    asset = SplatAsset(
        uv=uv, offset=rng.normal(scale=0.02, size=n),
        log_scale=rng.uniform(np.log(0.02), np.log(0.08), size=(n, 2)),
        rotation=rot, opacity_logit=logit(rng.uniform(0.2, 0.8, size=n)),
        sh_color=rng.normal(scale=0.3, size=(n, k, 3)),
        shadow_vector=rng.uniform(0.1, 0.9, size=(n, b + 1)),
        triangle_id=tri, barycentric=bary,
        mesh_hash=mesh.content_hash(), sh_degree=sh_degree, epsilon=1e-4)
    return asset


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def const_light():
    from facesplat.lighting import Lighting
    return Lighting.build(constant_envmap(value=(1.0, 1.0, 1.0)))
