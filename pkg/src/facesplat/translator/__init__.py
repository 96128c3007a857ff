"""Patch-based diffusion translator from PBR assets to splat assets."""

from .schedule import DiffusionSchedule
from .patches import (PATCH_GRID, PatchOverBudget, PatchSample, affected_patches,
                      extract_patch, grid_offsets)
from .pca import GeometryBasis, build_geometry_pca, project_geometry
from .model import TranslatorConfig, PatchDenoiser, uv_positional_encoding
from .data import AttributeStats, TranslatorDataset, build_dataset_manifest
from .train import train_step_simple, train_step_finetune, train_translator
from .sample import sample_asset, retranslate_patches
from .checkpoint import load_checkpoint, save_checkpoint, load_model, save_model

__all__ = [
    "AttributeStats", "DiffusionSchedule", "GeometryBasis", "PATCH_GRID",
    "PatchDenoiser", "PatchOverBudget", "PatchSample", "TranslatorConfig",
    "TranslatorDataset", "affected_patches", "build_dataset_manifest",
    "build_geometry_pca", "extract_patch", "grid_offsets", "load_checkpoint",
    "load_model", "project_geometry", "retranslate_patches", "sample_asset",
    "save_checkpoint", "save_model", "train_step_finetune", "train_step_simple",
    "train_translator", "uv_positional_encoding",
]
