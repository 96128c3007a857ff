"""Image containers and codecs.

PNG files are plain [0, 1] containers (no transfer function applied on read
or write); render outputs are gamma-2.2 encoded explicitly before saving.
EXR and Radiance .hdr carry linear float data.
"""

import os

os.environ.setdefault("OPENCV_IO_ENABLE_OPENEXR", "1")

import cv2  # noqa: E402
import numpy as np  # noqa: E402

from .errors import ParseError  # noqa: E402

GAMMA = 2.2


def gamma_encode(linear: np.ndarray) -> np.ndarray:
    return np.clip(linear, 0.0, 1.0) ** (1.0 / GAMMA)


def gamma_decode(encoded: np.ndarray) -> np.ndarray:
    return np.clip(encoded, 0.0, 1.0) ** GAMMA


def read_image(path) -> np.ndarray:
    """Read PNG (8/16-bit), EXR or HDR into float32 RGB."""
    if str(path).endswith(".exr"):
        from .exr import read_exr
        return read_exr(path)
    img = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if img is None:
        raise ParseError(f"{path}: unreadable image")
    if img.ndim == 2:
        img = img[:, :, None].repeat(3, axis=2)
    if img.shape[2] == 4:
        img = img[:, :, :3]
    img = img[:, :, ::-1]  # BGR -> RGB
    if img.dtype == np.uint8:
        return img.astype(np.float32) / 255.0
    if img.dtype == np.uint16:
        return img.astype(np.float32) / 65535.0
    return img.astype(np.float32)


def write_png(path, img01: np.ndarray, bits: int = 8) -> None:
    img01 = np.clip(np.asarray(img01, dtype=np.float64), 0.0, 1.0)
    if img01.ndim == 2:
        img01 = img01[:, :, None].repeat(3, axis=2)
    if bits == 8:
        data = np.round(img01 * 255.0).astype(np.uint8)
    elif bits == 16:
        data = np.round(img01 * 65535.0).astype(np.uint16)
    else:
        raise ValueError("PNG bit depth must be 8 or 16")
    if not cv2.imwrite(str(path), data[:, :, ::-1]):
        raise IOError(f"failed to write {path}")


def encode_png_bytes(img01: np.ndarray) -> bytes:
    img01 = np.clip(np.asarray(img01, dtype=np.float64), 0.0, 1.0)
    data = np.round(img01 * 255.0).astype(np.uint8)
    ok, buf = cv2.imencode(".png", data[:, :, ::-1])
    if not ok:
        raise IOError("PNG encoding failed")
    return buf.tobytes()


def write_exr(path, img: np.ndarray) -> None:
    from .exr import write_exr as _write
    _write(path, np.asarray(img, dtype=np.float32))


def write_hdr(path, img: np.ndarray) -> None:
    data = np.ascontiguousarray(np.asarray(img, dtype=np.float32)[:, :, ::-1])
    if not cv2.imwrite(str(path), data):
        raise IOError(f"failed to write {path}")


def save_render(path, linear_img: np.ndarray) -> None:
    """Save a linear render: PNG gets gamma 2.2, EXR stays linear.

    PNG goes through the same in-memory encoder as the render service so the
    bytes agree exactly.
    """
    path = str(path)
    if path.endswith(".exr"):
        write_exr(path, linear_img)
    else:
        with open(path, "wb") as fh:
            fh.write(encode_png_bytes(gamma_encode(linear_img)))
