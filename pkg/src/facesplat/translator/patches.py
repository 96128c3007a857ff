"""UV patch extraction: splat groups plus aligned texture crops."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..asset import SplatAsset
from ..lighting import Lighting
from ..textures import PBRTextureSet, sample_bilinear

PATCH_GRID = 16  # canonical inference grid: 16x16 patches of size 1/16


class PatchOverBudget(ValueError):
    """More splats landed in the patch than the token budget allows."""


@dataclass
class PatchSample:
    global_offset: np.ndarray   # q, (2,)
    patch_size: np.ndarray      # P, (2,)
    uv: np.ndarray              # (M, 2) absolute positions, padded rows zero
    attrs: np.ndarray           # (M, A) attribute rows, padded rows zero
    mask: np.ndarray            # (M,) True for real splats
    image_patch: np.ndarray     # (E, E, 10): diffuse|normal|specular|shadow
    point_indices: np.ndarray   # (count,) rows of the source asset, uv-lex order

    @property
    def count(self) -> int:
        return int(self.mask.sum())


def grid_offsets(grid: int = PATCH_GRID) -> np.ndarray:
    """Global offsets of the canonical non-overlapping patch grid, (grid^2, 2)."""
    ij = np.stack(np.meshgrid(np.arange(grid), np.arange(grid), indexing="ij"),
                  axis=-1).reshape(-1, 2)
    return ij.astype(np.float64) / grid


def points_in_patch(asset: SplatAsset, q, patch: float) -> np.ndarray:
    """Indices of splats with uv in [q, q+P), sorted uv-lexicographically
    (u first, then v, then original index)."""
    q = np.asarray(q, dtype=np.float64)
    uv = asset.uv.astype(np.float64)
    inside = ((uv >= q[None, :]) & (uv < q[None, :] + patch)).all(axis=1)
    idx = np.where(inside)[0]
    order = np.lexsort((idx, uv[idx, 1], uv[idx, 0]))
    return idx[order]


def crop_image_stack(textures: PBRTextureSet, lighting: Lighting | None, q,
                     patch: float, resolution: int) -> np.ndarray:
    """Bilinear resample of the texture stack over [q, q+P) to (E, E, 10)."""
    q = np.asarray(q, dtype=np.float64)
    grid = (np.arange(resolution) + 0.5) / resolution * patch
    uu, vv = np.meshgrid(q[0] + grid, q[1] + grid, indexing="ij")
    uv = np.stack([uu.reshape(-1), vv.reshape(-1)], axis=1)
    stack = sample_bilinear(textures.stacked(), uv).reshape(resolution, resolution, 9)
    if lighting is not None and lighting.shadow_map.size:
        shadow = sample_bilinear(lighting.shadow_map[:, :, None], uv)
    else:
        shadow = np.ones((resolution * resolution, 1))
    shadow = shadow.reshape(resolution, resolution, 1)
    return np.concatenate([stack, shadow], axis=2).astype(np.float32)


def extract_patch(asset: SplatAsset, textures: PBRTextureSet, lighting: Lighting | None,
                  q, patch: float, max_points: int, image_resolution: int,
                  attrs: np.ndarray | None = None) -> PatchSample:
    """Gather the splats and the texture crop of one square UV patch.

    `attrs` overrides the attribute rows (e.g. standardized values); defaults
    to the asset's raw attribute matrix.
    """
    q = np.asarray(q, dtype=np.float64)
    if (q < 0).any() or (q + patch > 1.0 + 1e-9).any():
        raise ValueError(f"patch [{q}, {q + patch}] leaves the unit UV square")
    idx = points_in_patch(asset, q, patch)
    if len(idx) > max_points:
        raise PatchOverBudget(f"{len(idx)} splats exceed the budget of {max_points}")
    source = asset.attribute_matrix() if attrs is None else attrs
    a = source[idx]
    uv = asset.uv[idx].astype(np.float64)
    m = len(idx)
    width = a.shape[1]
    attrs_pad = np.zeros((max_points, width), dtype=np.float32)
    uv_pad = np.zeros((max_points, 2), dtype=np.float64)
    mask = np.zeros(max_points, dtype=bool)
    attrs_pad[:m] = a
    uv_pad[:m] = uv
    mask[:m] = True
    image = crop_image_stack(textures, lighting, q, patch, image_resolution)
    return PatchSample(q, np.asarray([patch, patch]), uv_pad, attrs_pad, mask,
                       image, idx.astype(np.int64))


def affected_patches(edit_lo, edit_hi, texture_resolution: int,
                     grid: int = PATCH_GRID) -> list[int]:
    """Canonical-grid patch ids whose texture crops can see an edited UV rect.

    The rect is padded by one texel so bilinear taps at patch borders count.
    """
    pad = 1.0 / texture_resolution
    lo = np.asarray(edit_lo, dtype=np.float64) - pad
    hi = np.asarray(edit_hi, dtype=np.float64) + pad
    ids = []
    for pid, q in enumerate(grid_offsets(grid)):
        qhi = q + 1.0 / grid
        if (hi >= q).all() and (lo <= qhi).all():
            ids.append(pid)
    return ids
