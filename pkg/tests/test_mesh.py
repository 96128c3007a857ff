import numpy as np
import pytest

from facesplat.errors import ChecksumError, FormatVersionError, InvariantError, ParseError
from facesplat.mesh import (ExpressionWeights, FaceMesh, UvIndex, load_blendshapes,
                            load_mesh, rasterize_uv_mask, save_mesh, uv_from_cache)
from facesplat.synthetic import sphere_head, unit_quad_mesh


def test_quad_obj_roundtrip(tmp_path, quad_mesh):
    path = tmp_path / "quad.obj"
    save_mesh(quad_mesh, path)
    back = load_mesh(path)
    assert back.num_triangles == 2 and back.num_vertices == 4
    assert np.array_equal(back.vertices, quad_mesh.vertices)
    assert np.array_equal(back.uv_corners, quad_mesh.uv_corners)
    assert np.array_equal(back.triangles, quad_mesh.triangles)


def test_degenerate_uv_triangle_reports_face(tmp_path):
    path = tmp_path / "bad.obj"
    path.write_text(
        "v 0 0 0\nv 1 0 0\nv 1 1 0\n"
        "vt 0 0\nvt 0 0\nvt 0 0\n"
        "f 1/1 2/2 3/3\n")
    with pytest.raises(InvariantError, match="face 0"):
        load_mesh(path)


def test_sphere_roundtrip_with_blendshapes(tmp_path, small_sphere):
    path = tmp_path / "head.obj"
    save_mesh(small_sphere, path)
    assert (tmp_path / "head.bsd").exists()
    back = load_mesh(path)
    assert back.num_blendshapes == small_sphere.num_blendshapes
    assert np.array_equal(back.vertices, small_sphere.vertices)
    assert np.array_equal(back.uv_corners, small_sphere.uv_corners)
    assert np.array_equal(back.blendshape_deltas, small_sphere.blendshape_deltas)


def test_obj_parse_error_reports_line(tmp_path):
    path = tmp_path / "bad.obj"
    path.write_text("v 0 0 0\nv nope 0 0\n")
    with pytest.raises(ParseError, match="bad.obj:2"):
        load_mesh(path)


def test_missing_uv_index_rejected(tmp_path):
    path = tmp_path / "nouv.obj"
    path.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n")
    with pytest.raises(ParseError, match="UV"):
        load_mesh(path)


def test_overlapping_uv_triangles_rejected():
    vertices = np.asarray([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0.2, 0.2, 1]], dtype=np.float32)
    triangles = np.asarray([[0, 1, 2], [0, 1, 3]], dtype=np.int32)
    uv = np.asarray([
        [[0, 0], [1, 0], [0, 1]],
        [[0.1, 0.1], [0.9, 0.1], [0.1, 0.9]],   # sits inside the first triangle
    ], dtype=np.float32)
    mesh = FaceMesh(vertices, triangles, uv, np.zeros((0, 4, 3)))
    with pytest.raises(InvariantError, match="overlap"):
        mesh.validate()


def test_adjacent_uv_triangles_pass(quad_mesh):
    quad_mesh.validate()  # shares an edge, zero overlap area


def test_sphere_mesh_valid(small_sphere):
    small_sphere.validate()


def test_bsd_checksum_and_magic(tmp_path, small_sphere):
    save_mesh(small_sphere, tmp_path / "m.obj")
    bsd = tmp_path / "m.bsd"
    blob = bytearray(bsd.read_bytes())
    blob[20] ^= 0xFF
    bsd.write_bytes(bytes(blob))
    with pytest.raises(ChecksumError):
        load_blendshapes(bsd)
    blob[0] = ord("X")
    bsd.write_bytes(bytes(blob))
    with pytest.raises(FormatVersionError):
        load_blendshapes(bsd)


def test_expression_weights_validation(small_sphere):
    ExpressionWeights(np.zeros(small_sphere.num_blendshapes)).validate(small_sphere)
    with pytest.raises(InvariantError):
        ExpressionWeights(np.zeros(1)).validate(small_sphere)
    with pytest.raises(InvariantError):
        ExpressionWeights(np.full(small_sphere.num_blendshapes, 1.5)).validate(small_sphere)


def test_uv_index_locates_and_reproduces(quad_mesh, rng):
    index = UvIndex(quad_mesh)
    pts = rng.uniform(0.01, 0.99, size=(200, 2))
    tri, bary = index.locate(pts)
    assert (tri >= 0).all()
    back = uv_from_cache(quad_mesh, tri, bary)
    assert np.abs(back - pts).max() < 1e-5


def test_uv_index_tie_break_lowest_triangle(quad_mesh):
    # points on the shared diagonal u == v belong to both triangles
    pts = np.asarray([[0.5, 0.5], [0.25, 0.25]])
    tri, _ = UvIndex(quad_mesh).locate(pts)
    assert (tri == 0).all()


def test_uv_mask_full_on_quad(quad_mesh):
    mask = rasterize_uv_mask(quad_mesh, 32)
    assert mask.all()


def test_uv_mask_partial_on_sphere(small_sphere):
    mask = rasterize_uv_mask(small_sphere, 64)
    frac = mask.mean()
    assert 0.8 < frac < 1.0  # pole wedges are uncovered


def test_mesh_hash_changes_with_content(quad_mesh):
    h0 = quad_mesh.content_hash()
    moved = FaceMesh(quad_mesh.vertices + 0.1, quad_mesh.triangles,
                     quad_mesh.uv_corners, quad_mesh.blendshape_deltas)
    assert moved.content_hash() != h0


def test_out_of_range_triangle_index():
    mesh = FaceMesh(np.zeros((3, 3), dtype=np.float32),
                    np.asarray([[0, 1, 5]], dtype=np.int32),
                    np.asarray([[[0, 0], [1, 0], [0, 1]]], dtype=np.float32),
                    np.zeros((0, 3, 3)))
    with pytest.raises(InvariantError, match="triangle 0"):
        mesh.validate()
