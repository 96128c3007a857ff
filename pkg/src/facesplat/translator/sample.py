"""Full-asset synthesis: reverse diffusion per patch over the canonical grid."""

from __future__ import annotations

import numpy as np
import torch

from ..asset import SplatAsset
from ..fit import pixel_aligned_init
from ..lighting import Lighting
from ..mesh import FaceMesh
from ..textures import PBRTextureSet
from .data import AttributeStats
from .model import PatchDenoiser, TranslatorConfig
from .patches import crop_image_stack, grid_offsets, points_in_patch
from .pca import GeometryBasis, project_geometry
from .schedule import DiffusionSchedule


def _patch_noise(seed: int, patch_id: int, shape) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence([seed, patch_id]))
    return rng.standard_normal(shape)


def sample_asset(model: PatchDenoiser, schedule: DiffusionSchedule,
                 stats: AttributeStats, basis: GeometryBasis, mesh: FaceMesh,
                 textures: PBRTextureSet, lighting: Lighting, inference_steps: int = 10,
                 seed: int = 0, patch_ids: list[int] | None = None,
                 base_asset: SplatAsset | None = None) -> SplatAsset:
    """Generate splat attributes for every canonical-grid patch (or a subset).

    The UV skeleton comes from the same grid-phase sampling the training assets
    used, so every generated asset shares the training sampling pattern. With
    `patch_ids`, only those patches are regenerated; the rest keep the values
    of `base_asset` (which must share the skeleton). Per-patch noise depends
    only on (seed, patch id), so regeneration is subset-stable.
    """
    cfg = model.config
    if base_asset is not None:
        asset = base_asset.copy()
    else:
        asset = pixel_aligned_init(mesh, textures.uv_mask, cfg.pas_density,
                                   cfg.pas_seed, diffuse=textures.diffuse,
                                   sh_degree=cfg.sh_degree, epsilon=cfg.epsilon)
    geom_code = project_geometry(mesh, basis)
    ids = list(range(cfg.patch_grid ** 2)) if patch_ids is None else list(patch_ids)
    offsets = grid_offsets(cfg.patch_grid)

    patches = []
    for pid in ids:
        q = offsets[pid]
        idx = points_in_patch(asset, q, cfg.patch_size)
        if len(idx) == 0:
            continue
        if len(idx) > cfg.max_points_per_patch:
            raise ValueError(
                f"patch {pid} holds {len(idx)} points, over the model budget "
                f"{cfg.max_points_per_patch}; PAS parameters do not match the model")
        patches.append((pid, q, idx))
    if not patches:
        return asset

    m = cfg.max_points_per_patch
    bsz = len(patches)
    uv = np.zeros((bsz, m, 2), dtype=np.float32)
    mask = np.zeros((bsz, m), dtype=bool)
    image = np.zeros((bsz, cfg.image_resolution, cfg.image_resolution, 10),
                     dtype=np.float32)
    x = np.zeros((bsz, m, cfg.attr_dim), dtype=np.float32)
    for b, (pid, q, idx) in enumerate(patches):
        uv[b, :len(idx)] = asset.uv[idx]
        mask[b, :len(idx)] = True
        image[b] = crop_image_stack(textures, lighting, q, cfg.patch_size,
                                    cfg.image_resolution)
        x[b] = _patch_noise(seed, pid, (m, cfg.attr_dim)).astype(np.float32)

    uv_t = torch.from_numpy(uv)
    mask_t = torch.from_numpy(mask)
    q_t = torch.from_numpy(np.stack([q for _, q, _ in patches])).float()
    image_t = torch.from_numpy(image).permute(0, 3, 1, 2)
    light_t = torch.from_numpy(lighting.env_sh.reshape(-1)).float().expand(bsz, -1)
    geom_t = torch.from_numpy(geom_code).float().expand(bsz, -1)
    x_t = torch.from_numpy(x)

    timesteps = schedule.inference_timesteps(inference_steps)
    model.eval()
    with torch.no_grad():
        for si, t in enumerate(timesteps):
            t_batch = torch.full((bsz,), t, dtype=torch.long)
            x0_pred = model(x_t, uv_t, mask_t, q_t, image_t, light_t, geom_t, t_batch)
            t_prev = timesteps[si + 1] if si + 1 < len(timesteps) else 0
            x_t = schedule.ddim_step(x_t, x0_pred, t, t_prev)

    attrs = asset.attribute_matrix()
    out = x_t.numpy()
    for b, (pid, q, idx) in enumerate(patches):
        attrs[idx] = stats.destandardize(out[b, :len(idx)].astype(np.float64))
    asset.set_attribute_matrix(attrs)
    asset.renormalize()
    return asset


def retranslate_patches(model: PatchDenoiser, schedule: DiffusionSchedule,
                        stats: AttributeStats, basis: GeometryBasis,
                        base_asset: SplatAsset, mesh: FaceMesh,
                        textures: PBRTextureSet, lighting: Lighting,
                        patch_ids: list[int], inference_steps: int = 10,
                        seed: int = 0) -> SplatAsset:
    """Regenerate only the given patches after an asset edit (same seed keeps
    untouched patches bit-identical)."""
    return sample_asset(model, schedule, stats, basis, mesh, textures, lighting,
                        inference_steps=inference_steps, seed=seed,
                        patch_ids=patch_ids, base_asset=base_asset)
