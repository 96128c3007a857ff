"""Mesh-rigged Gaussian splats for facial assets."""

from .asset import GaussianPoint, SplatAsset, load_asset, save_asset
from .camera import Camera, look_at, orbit
from .errors import (ChecksumError, FormatVersionError, InvariantError,
                     OptimizationDiverged, ParseError)
from .fit import (FitConfig, PruneReport, TrainView, deferred_prune, optimize,
                  pixel_aligned_init, prune_curve)
from .lighting import Lighting, bake_shadow_map, decompose_envmap
from .mesh import ExpressionWeights, FaceMesh, load_mesh, save_mesh
from .metrics import psnr, ssim
from .renderer import (RenderConfig, RenderOutput, Splat2D, apply_shadow, backward,
                       eval_sh_color, project_gaussian, rasterize, render_asset)
from .rigging import (PosedGaussian, TriangleFrame, pose_asset, pose_gaussian,
                      pose_mesh, triangle_frame)
from .shader import reference_render
from .textures import PBRTextureSet

__version__ = "0.1.0"

__all__ = [
    "Camera", "ChecksumError", "ExpressionWeights", "FaceMesh", "FitConfig",
    "FormatVersionError", "GaussianPoint", "InvariantError", "Lighting",
    "OptimizationDiverged", "PBRTextureSet", "ParseError", "PosedGaussian",
    "PruneReport", "RenderConfig", "RenderOutput", "Splat2D", "SplatAsset",
    "TrainView", "TriangleFrame", "apply_shadow", "backward", "bake_shadow_map",
    "decompose_envmap", "deferred_prune", "eval_sh_color", "load_asset",
    "load_mesh", "look_at", "optimize", "orbit", "pixel_aligned_init",
    "pose_asset", "pose_gaussian", "pose_mesh", "project_gaussian", "prune_curve",
    "psnr", "rasterize", "reference_render", "render_asset", "save_asset",
    "save_mesh", "ssim", "triangle_frame",
]
