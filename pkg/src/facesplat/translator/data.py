"""Training data plumbing: standardization, manifests, batch assembly."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from ..asset import SplatAsset, load_asset
from ..camera import look_at
from ..lighting import ENV_SH_ORDER, Lighting, bake_shadow_map, decompose_envmap
from ..mesh import FaceMesh, load_mesh
from ..rigging import pose_mesh
from ..textures import PBRTextureSet
from .. import images
from .model import TranslatorConfig
from .patches import PatchOverBudget, extract_patch
from .pca import GeometryBasis, project_geometry


@dataclass
class AttributeStats:
    mean: np.ndarray  # (A,)
    std: np.ndarray   # (A,)

    @classmethod
    def from_assets(cls, assets: list[SplatAsset]) -> "AttributeStats":
        rows = np.concatenate([a.attribute_matrix() for a in assets], axis=0)
        mean = rows.mean(axis=0)
        std = np.maximum(rows.std(axis=0), 1e-6)
        return cls(mean.astype(np.float64), std.astype(np.float64))

    def standardize(self, attrs: np.ndarray) -> np.ndarray:
        return ((attrs - self.mean[None, :]) / self.std[None, :]).astype(np.float32)

    def destandardize(self, attrs: np.ndarray) -> np.ndarray:
        return (attrs * self.std[None, :] + self.mean[None, :]).astype(np.float32)


@dataclass
class DatasetEntry:
    name: str
    mesh: FaceMesh
    textures: PBRTextureSet
    lighting: Lighting
    asset: SplatAsset
    geom_code: np.ndarray
    std_attrs: np.ndarray       # standardized attribute matrix of the asset

    def probe_camera_for(self, point_indices: np.ndarray, size: int):
        """Fixed frontal camera over the patch's world-space region (neutral)."""
        verts = pose_mesh(self.mesh, _neutral(self.mesh))
        tris = self.mesh.triangles[self.asset.triangle_id[point_indices]]
        w0 = self.asset.barycentric[point_indices, 0:1].astype(np.float64)
        w1 = self.asset.barycentric[point_indices, 1:2].astype(np.float64)
        w2 = 1.0 - w0 - w1
        pts = w0 * verts[tris[:, 0]] + w1 * verts[tris[:, 1]] + w2 * verts[tris[:, 2]]
        a = verts[tris[:, 0]]
        b = verts[tris[:, 1]]
        c = verts[tris[:, 2]]
        n = np.cross(b - a, c - a)
        n_sum = n.sum(axis=0)
        n_sum /= max(np.linalg.norm(n_sum), 1e-12)
        center = pts.mean(axis=0)
        radius = max(float(np.linalg.norm(pts - center, axis=1).max()), 1e-3)
        return look_at(center + n_sum * max(5.0 * radius, 0.15), center,
                       up=(0.0, 0.0, 1.0), fov=35.0, width=size, height=size)


def _neutral(mesh):
    from ..mesh import ExpressionWeights
    return ExpressionWeights.neutral(mesh)


class TranslatorDataset:
    def __init__(self, entries: list[DatasetEntry], stats: AttributeStats,
                 basis: GeometryBasis, config: TranslatorConfig):
        self.entries = entries
        self.stats = stats
        self.basis = basis
        self.config = config

    @classmethod
    def build(cls, scenes: list[dict], config: TranslatorConfig,
              pca_meshes: list[FaceMesh] | None = None) -> "TranslatorDataset":
        """scenes: dicts with keys mesh, textures, lighting, asset, name."""
        assets = [s["asset"] for s in scenes]
        stats = AttributeStats.from_assets(assets)
        meshes = pca_meshes if pca_meshes is not None else [s["mesh"] for s in scenes]
        from .pca import build_geometry_pca
        basis = build_geometry_pca(meshes, config.geometry_dim)
        entries = []
        for s in scenes:
            entries.append(DatasetEntry(
                name=s.get("name", f"entry{len(entries)}"),
                mesh=s["mesh"], textures=s["textures"], lighting=s["lighting"],
                asset=s["asset"],
                geom_code=project_geometry(s["mesh"], basis),
                std_attrs=stats.standardize(s["asset"].attribute_matrix())))
        return cls(entries, stats, basis, config)

    def random_patch(self, rng: np.random.Generator):
        """One non-empty training patch at a random global offset."""
        cfg = self.config
        for _ in range(200):
            entry = self.entries[int(rng.integers(len(self.entries)))]
            q = rng.uniform(0.0, 1.0 - cfg.patch_size, size=2)
            try:
                sample = extract_patch(entry.asset, entry.textures, entry.lighting,
                                       q, cfg.patch_size, cfg.max_points_per_patch,
                                       cfg.image_resolution, attrs=entry.std_attrs)
            except PatchOverBudget:
                continue
            if sample.count > 0:
                return entry, sample
        raise RuntimeError("could not draw a non-empty patch in 200 attempts")

    def batch(self, rng: np.random.Generator, batch_size: int) -> dict:
        entries, samples = [], []
        for _ in range(batch_size):
            e, s = self.random_patch(rng)
            entries.append(e)
            samples.append(s)
        return self.collate(entries, samples)

    def collate(self, entries, samples) -> dict:
        t = {
            "attrs": torch.from_numpy(np.stack([s.attrs for s in samples])),
            "uv": torch.from_numpy(np.stack([s.uv for s in samples])).float(),
            "mask": torch.from_numpy(np.stack([s.mask for s in samples])),
            "q": torch.from_numpy(np.stack([s.global_offset for s in samples])).float(),
            "image": torch.from_numpy(
                np.stack([s.image_patch for s in samples])).permute(0, 3, 1, 2).float(),
            "light": torch.from_numpy(np.stack(
                [e.lighting.env_sh.reshape(-1) for e in entries])).float(),
            "geom": torch.from_numpy(np.stack(
                [e.geom_code for e in entries])).float(),
        }
        t["entries"] = entries
        t["samples"] = samples
        return t


# ---------------------------------------------------------------------------
# on-disk manifest

def build_dataset_manifest(path, scene_files: list[dict], stats: AttributeStats,
                           extra: dict | None = None) -> None:
    """scene_files: dicts of file paths (gfa, mesh, diffuse, normal, specular,
    mask, envmap) describing each training combination."""
    doc = {
        "entries": scene_files,
        "stats": {"mean": stats.mean.tolist(), "std": stats.std.tolist()},
    }
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=2))


def load_dataset_from_manifest(path, config: TranslatorConfig,
                               shadow_resolution: int = 32) -> TranslatorDataset:
    doc = json.loads(Path(path).read_text())
    root = Path(path).parent
    scenes = []
    for e in doc["entries"]:
        mesh = load_mesh(root / e["mesh"])
        textures = PBRTextureSet.load(root / e["diffuse"], root / e["normal"],
                                      root / e["specular"],
                                      root / e["mask"] if e.get("mask") else None)
        env = images.read_image(root / e["envmap"])
        lighting = Lighting(env, decompose_envmap(env, ENV_SH_ORDER),
                            bake_shadow_map(mesh, env, shadow_resolution))
        scenes.append({
            "name": e.get("name", Path(e["gfa"]).stem),
            "mesh": mesh, "textures": textures, "lighting": lighting,
            "asset": load_asset(root / e["gfa"]),
        })
    stats = AttributeStats(np.asarray(doc["stats"]["mean"]),
                           np.asarray(doc["stats"]["std"]))
    from .pca import build_geometry_pca
    pca_files = doc.get("pca_meshes")
    meshes = ([load_mesh(root / p) for p in pca_files]
              if pca_files else [s["mesh"] for s in scenes])
    basis = build_geometry_pca(meshes, config.geometry_dim)
    entries = []
    for s in scenes:
        entries.append(DatasetEntry(
            name=s["name"], mesh=s["mesh"], textures=s["textures"],
            lighting=s["lighting"], asset=s["asset"],
            geom_code=project_geometry(s["mesh"], basis),
            std_attrs=stats.standardize(s["asset"].attribute_matrix())))
    return TranslatorDataset(entries, stats, basis, config)
