"""Minimal OpenEXR 2.0 codec: single-part scanline, uncompressed, RGB.

Covers the linear float interchange this package needs without an external
EXR library. Reads FLOAT and HALF channels; writes FLOAT. Compressed files
from other tools are rejected with a clear error.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import ParseError

_MAGIC = struct.pack("<i", 20000630)


def _attr(name: str, type_: str, data: bytes) -> bytes:
    return name.encode() + b"\x00" + type_.encode() + b"\x00" + struct.pack("<i", len(data)) + data


def write_exr(path, img: np.ndarray) -> None:
    img = np.asarray(img, dtype=np.float32)
    if img.ndim == 2:
        img = img[:, :, None].repeat(3, axis=2)
    h, w, _ = img.shape
    chlist = b""
    for name in (b"B", b"G", b"R"):  # alphabetical, required by the format
        chlist += name + b"\x00" + struct.pack("<i", 2) + struct.pack("<i", 0) \
            + struct.pack("<ii", 1, 1)
    chlist += b"\x00"
    box = struct.pack("<iiii", 0, 0, w - 1, h - 1)
    header = (
        _attr("channels", "chlist", chlist)
        + _attr("compression", "compression", b"\x00")
        + _attr("dataWindow", "box2i", box)
        + _attr("displayWindow", "box2i", box)
        + _attr("lineOrder", "lineOrder", b"\x00")
        + _attr("pixelAspectRatio", "float", struct.pack("<f", 1.0))
        + _attr("screenWindowCenter", "v2f", struct.pack("<ff", 0.0, 0.0))
        + _attr("screenWindowWidth", "float", struct.pack("<f", 1.0))
        + b"\x00"
    )
    preamble = _MAGIC + struct.pack("<i", 2) + header
    table_pos = len(preamble)
    data_start = table_pos + 8 * h
    line_bytes = 8 + 3 * 4 * w
    offsets = [data_start + y * line_bytes for y in range(h)]
    chunks = []
    for y in range(h):
        row = img[y]
        payload = row[:, 2].astype("<f4").tobytes() + row[:, 1].astype("<f4").tobytes() \
            + row[:, 0].astype("<f4").tobytes()
        chunks.append(struct.pack("<ii", y, len(payload)) + payload)
    with open(path, "wb") as fh:
        fh.write(preamble)
        fh.write(struct.pack(f"<{h}Q", *offsets))
        fh.write(b"".join(chunks))


def read_exr(path) -> np.ndarray:
    blob = open(path, "rb").read()
    if blob[:4] != _MAGIC:
        raise ParseError(f"{path}: not an EXR file")
    pos = 8
    channels = []
    compression = None
    data_window = None
    while True:
        end = blob.index(b"\x00", pos)
        name = blob[pos:end].decode()
        pos = end + 1
        if name == "":
            break
        end = blob.index(b"\x00", pos)
        type_ = blob[pos:end].decode()
        pos = end + 1
        size = struct.unpack("<i", blob[pos:pos + 4])[0]
        pos += 4
        data = blob[pos:pos + size]
        pos += size
        if name == "channels" and type_ == "chlist":
            cpos = 0
            while data[cpos] != 0:
                cend = data.index(b"\x00", cpos)
                cname = data[cpos:cend].decode()
                cpos = cend + 1
                ptype = struct.unpack("<i", data[cpos:cpos + 4])[0]
                cpos += 16
                channels.append((cname, ptype))
        elif name == "compression":
            compression = data[0]
        elif name == "dataWindow":
            data_window = struct.unpack("<iiii", data)
    if compression != 0:
        raise ParseError(f"{path}: only uncompressed EXR is supported (compression={compression})")
    if data_window is None or not channels:
        raise ParseError(f"{path}: missing dataWindow or channels")
    x0, y0, x1, y1 = data_window
    w, h = x1 - x0 + 1, y1 - y0 + 1
    sizes = {0: 4, 1: 2, 2: 4}
    dtypes = {0: "<u4", 1: "<f2", 2: "<f4"}
    offsets = struct.unpack(f"<{h}Q", blob[pos:pos + 8 * h])
    planes = {}
    for y, off in enumerate(offsets):
        line_y, _size = struct.unpack("<ii", blob[off:off + 8])
        cur = off + 8
        for cname, ptype in channels:
            nb = sizes[ptype] * w
            row = np.frombuffer(blob[cur:cur + nb], dtype=dtypes[ptype]).astype(np.float32)
            planes.setdefault(cname, np.zeros((h, w), dtype=np.float32))[line_y - y0] = row
            cur += nb
    if all(k in planes for k in ("R", "G", "B")):
        return np.stack([planes["R"], planes["G"], planes["B"]], axis=2)
    first = planes[channels[0][0]]
    return np.stack([first] * 3, axis=2)
