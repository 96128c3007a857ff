import numpy as np
import pytest

from conftest import make_random_asset
from facesplat.asset import SplatAsset, load_asset, save_asset
from facesplat.errors import ChecksumError, FormatVersionError, InvariantError


def _empty_asset(mesh):
    return SplatAsset(
        uv=np.zeros((0, 2)), offset=np.zeros(0), log_scale=np.zeros((0, 2)),
        rotation=np.zeros((0, 2)), opacity_logit=np.zeros(0),
        sh_color=np.zeros((0, 4, 3)), shadow_vector=np.zeros((0, mesh.num_blendshapes + 1)),
        triangle_id=np.zeros(0, dtype=np.int32), barycentric=np.zeros((0, 2)),
        mesh_hash=mesh.content_hash(), sh_degree=1, epsilon=1e-4)


def test_empty_asset_is_64_byte_file(tmp_path, quad_mesh):
    path = tmp_path / "empty.gfa"
    save_asset(_empty_asset(quad_mesh), path)
    assert path.stat().st_size == 64
    back = load_asset(path)
    assert back.num_points == 0
    assert back.mesh_hash == quad_mesh.content_hash()


def test_random_asset_roundtrip_bit_exact(tmp_path, quad_mesh, rng):
    asset = make_random_asset(quad_mesh, 1000, rng, sh_degree=3, extra_blendshapes=4)
    path = tmp_path / "a.gfa"
    save_asset(asset, path)
    back = load_asset(path)
    for name in ("uv", "offset", "log_scale", "rotation", "opacity_logit",
                 "sh_color", "shadow_vector", "barycentric"):
        assert np.array_equal(getattr(back, name), getattr(asset, name)), name
    assert np.array_equal(back.triangle_id, asset.triangle_id)
    assert back.sh_degree == asset.sh_degree
    assert back.epsilon == asset.epsilon
    assert back.mesh_hash == asset.mesh_hash
    assert back.component_label == asset.component_label


def test_corrupt_magic_is_version_error(tmp_path, quad_mesh):
    path = tmp_path / "a.gfa"
    save_asset(_empty_asset(quad_mesh), path)
    blob = bytearray(path.read_bytes())
    blob[0] = ord("X")
    path.write_bytes(bytes(blob))
    with pytest.raises(FormatVersionError):
        load_asset(path)


def test_corrupt_body_is_checksum_error(tmp_path, quad_mesh, rng):
    asset = make_random_asset(quad_mesh, 10, rng)
    path = tmp_path / "a.gfa"
    save_asset(asset, path)
    blob = bytearray(path.read_bytes())
    blob[80] ^= 0x55
    path.write_bytes(bytes(blob))
    with pytest.raises(ChecksumError):
        load_asset(path)


def test_validate_catches_bad_rotation(quad_mesh, rng):
    asset = make_random_asset(quad_mesh, 10, rng)
    asset.rotation[0] = [2.0, 0.0]
    with pytest.raises(InvariantError, match="rotation"):
        asset.validate()
    asset.renormalize()
    asset.validate(quad_mesh)


def test_validate_catches_mesh_mismatch(quad_mesh, small_sphere, rng):
    asset = make_random_asset(quad_mesh, 10, rng)
    with pytest.raises(InvariantError, match="hash"):
        asset.validate(small_sphere)


def test_validate_checks_uv_cache(quad_mesh, rng):
    asset = make_random_asset(quad_mesh, 10, rng)
    asset.uv[0] = [0.999, 0.001]
    asset.barycentric[0] = [0.0, 0.0]  # no longer reproduces uv
    with pytest.raises(InvariantError, match="barycentric"):
        asset.validate(quad_mesh)


def test_attribute_matrix_roundtrip(quad_mesh, rng):
    asset = make_random_asset(quad_mesh, 32, rng, sh_degree=2)
    attrs = asset.attribute_matrix()
    assert attrs.shape == (32, 6 + 27 + asset.num_blendshapes + 1)
    clone = asset.copy()
    clone.set_attribute_matrix(attrs)
    for name in ("offset", "log_scale", "rotation", "opacity_logit", "sh_color",
                 "shadow_vector"):
        assert np.array_equal(getattr(clone, name), getattr(asset, name)), name


def test_select_leaves_original(quad_mesh, rng):
    asset = make_random_asset(quad_mesh, 20, rng)
    sub = asset.select(np.arange(5))
    sub.offset[:] = 99.0
    assert asset.offset.max() < 99.0
    assert sub.num_points == 5


def test_opacity_is_sigmoid(quad_mesh, rng):
    asset = make_random_asset(quad_mesh, 5, rng)
    assert np.allclose(asset.opacity, 1 / (1 + np.exp(-asset.opacity_logit)), atol=1e-6)
    p = asset.point(2)
    assert p.opacity == pytest.approx(float(asset.opacity[2]), abs=1e-7)
    assert np.allclose(p.scale, np.exp(asset.log_scale[2]), atol=1e-7)
