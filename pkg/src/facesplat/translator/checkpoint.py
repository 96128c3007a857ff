"""Model checkpoint container.

Layout (little-endian):
  magic "TGS1"
  u32 length of the UTF-8 config JSON blob, then the blob
  repeated tensor records:
    u16 name length, name bytes,
    u8 ndim, ndim x u32 dims,
    f32 data (C order)
  trailing u32 CRC32 over everything before it
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np
import torch

from ..errors import ChecksumError, FormatVersionError
from .data import AttributeStats
from .model import PatchDenoiser, TranslatorConfig
from .pca import GeometryBasis
from .schedule import DiffusionSchedule

_MAGIC = b"TGS1"


def save_checkpoint(path, config: dict, tensors: dict) -> None:
    blob = json.dumps(config, sort_keys=True).encode()
    parts = [_MAGIC, struct.pack("<I", len(blob)), blob]
    for name in sorted(tensors):
        data = np.ascontiguousarray(tensors[name], dtype="<f4")
        nb = name.encode()
        parts.append(struct.pack("<H", len(nb)) + nb)
        parts.append(struct.pack("<B", data.ndim)
                     + struct.pack(f"<{data.ndim}I", *data.shape))
        parts.append(data.tobytes())
    payload = b"".join(parts)
    Path(path).write_bytes(payload + struct.pack("<I", zlib.crc32(payload)))


def load_checkpoint(path):
    blob = Path(path).read_bytes()
    if blob[:4] != _MAGIC:
        raise FormatVersionError(f"{path}: not a TGS1 checkpoint")
    if zlib.crc32(blob[:-4]) != struct.unpack("<I", blob[-4:])[0]:
        raise ChecksumError(f"{path}: CRC mismatch")
    n = struct.unpack("<I", blob[4:8])[0]
    config = json.loads(blob[8:8 + n].decode())
    pos = 8 + n
    tensors = {}
    end = len(blob) - 4
    while pos < end:
        (name_len,) = struct.unpack("<H", blob[pos:pos + 2])
        pos += 2
        name = blob[pos:pos + name_len].decode()
        pos += name_len
        ndim = blob[pos]
        pos += 1
        dims = struct.unpack(f"<{ndim}I", blob[pos:pos + 4 * ndim])
        pos += 4 * ndim
        count = int(np.prod(dims)) if ndim else 1
        tensors[name] = np.frombuffer(
            blob[pos:pos + 4 * count], dtype="<f4").reshape(dims).copy()
        pos += 4 * count
    return config, tensors


def save_model(path, model: PatchDenoiser, stats: AttributeStats,
               basis: GeometryBasis, schedule: DiffusionSchedule) -> None:
    config = {
        "model": model.config.to_dict(),
        "schedule": {"kind": schedule.kind, "steps": schedule.steps},
        "format": 1,
    }
    tensors = {f"model.{k}": v.detach().numpy() for k, v in model.state_dict().items()}
    tensors["stats.mean"] = stats.mean
    tensors["stats.std"] = stats.std
    tensors["pca.mean"] = basis.mean
    tensors["pca.basis"] = basis.basis
    save_checkpoint(path, config, tensors)


def load_model(path):
    config, tensors = load_checkpoint(path)
    cfg = TranslatorConfig.from_dict(config["model"])
    model = PatchDenoiser(cfg)
    state = {k[len("model."):]: torch.from_numpy(v)
             for k, v in tensors.items() if k.startswith("model.")}
    model.load_state_dict(state)
    model.eval()
    stats = AttributeStats(tensors["stats.mean"].astype(np.float64),
                           tensors["stats.std"].astype(np.float64))
    basis = GeometryBasis(tensors["pca.mean"].astype(np.float64),
                          tensors["pca.basis"].astype(np.float64))
    schedule = DiffusionSchedule.build(config["schedule"]["kind"],
                                       config["schedule"]["steps"])
    return model, schedule, stats, basis
