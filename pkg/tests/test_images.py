import numpy as np
import pytest

from facesplat import images
from facesplat.errors import ParseError


def test_png8_roundtrip(tmp_path, rng):
    img = rng.uniform(size=(16, 20, 3))
    path = tmp_path / "t.png"
    images.write_png(path, img, bits=8)
    back = images.read_image(path)
    assert back.shape == (16, 20, 3)
    assert np.abs(back - img).max() <= 0.5 / 255 + 1e-6


def test_png16_roundtrip(tmp_path, rng):
    img = rng.uniform(size=(8, 8, 3))
    path = tmp_path / "t16.png"
    images.write_png(path, img, bits=16)
    back = images.read_image(path)
    assert np.abs(back - img).max() <= 0.5 / 65535 + 1e-7


def test_exr_roundtrip_exact(tmp_path, rng):
    img = rng.normal(size=(7, 13, 3)).astype(np.float32) * 3.0
    path = tmp_path / "t.exr"
    images.write_exr(path, img)
    back = images.read_image(path)
    assert np.array_equal(back, img)


def test_hdr_roundtrip(tmp_path, rng):
    img = (rng.uniform(size=(8, 16, 3)) * 4.0).astype(np.float32)
    path = tmp_path / "t.hdr"
    images.write_hdr(path, img)
    back = images.read_image(path)
    # Radiance shared-exponent encoding is lossy but close
    assert np.abs(back - img).max() < 0.02 * img.max() + 1e-3


def test_gamma_roundtrip():
    x = np.linspace(0, 1, 64).reshape(8, 8)[..., None].repeat(3, axis=2)
    assert np.abs(images.gamma_decode(images.gamma_encode(x)) - x).max() < 1e-12


def test_png_bytes_deterministic(rng):
    img = rng.uniform(size=(12, 12, 3))
    assert images.encode_png_bytes(img) == images.encode_png_bytes(img)


def test_unreadable_image_raises(tmp_path):
    path = tmp_path / "nope.png"
    path.write_bytes(b"not a png")
    with pytest.raises(ParseError):
        images.read_image(path)


def test_save_render_dispatches(tmp_path):
    img = np.full((8, 8, 3), 0.25, dtype=np.float32)
    images.save_render(tmp_path / "a.png", img)
    images.save_render(tmp_path / "a.exr", img)
    png = images.read_image(tmp_path / "a.png")
    exr = images.read_image(tmp_path / "a.exr")
    assert np.abs(png - images.gamma_encode(img)).max() < 1 / 255
    assert np.abs(exr - img).max() < 1e-7
