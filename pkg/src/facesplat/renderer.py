"""Differentiable tile-based splat rasterizer.

Forward: pose -> SH color + deformation shadow factor -> EWA projection ->
depth-sorted per-pixel alpha blending over the background. Tiling only
restricts which splats are evaluated per pixel; the skip threshold makes the
restriction exact, so tiled and naive blending agree to the last ulp-ish.
Backward is reverse-mode through the whole composite; UV anchors are locked
and receive no gradient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np
import torch

from . import sh
from .asset import SplatAsset
from .camera import Camera
from .mesh import ExpressionWeights, FaceMesh
from .rigging import PosedGaussian, RigBuffers, pose_points_torch


@dataclass
class RenderConfig:
    alpha_clip: float = 0.99          # per-splat alpha ceiling
    alpha_skip: float = 1.0 / 255.0   # contributions below this are skipped
    lowpass: float = 0.3              # px^2 added to the 2D covariance diagonal
    tile_size: int = 8
    radius_margin: float = 1.0        # px padding on the tile coverage radius

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RenderConfig":
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})


@dataclass
class Splat2D:
    screen_mean: np.ndarray   # (2,) pixels
    cov2d: np.ndarray         # (2, 2) symmetric positive definite
    depth: float              # camera-space z
    color: np.ndarray         # (3,) after SH + shadow evaluation
    alpha: float              # base opacity sigma


@dataclass
class RenderOutput:
    image: np.ndarray              # (H, W, 3) linear, pre-gamma
    alpha_map: np.ndarray          # (H, W)
    contributor_count: np.ndarray  # (H, W) int32


class _Clamp01(torch.autograd.Function):
    """clamp to [0, 1] with the projected subgradient at the boundaries:
    components pushing further outside the interval are zeroed, components
    pointing back inside pass through (so a factor parked at 1 can still
    learn to darken, but never receives pressure to brighten)."""

    @staticmethod
    def forward(ctx, x):
        ctx.save_for_backward(x)
        return x.clamp(0.0, 1.0)

    @staticmethod
    def backward(ctx, grad):
        (x,) = ctx.saved_tensors
        interior = (x > 0.0) & (x < 1.0)
        inward_low = (x <= 0.0) & (grad < 0.0)
        inward_high = (x >= 1.0) & (grad > 0.0)
        return grad * (interior | inward_low | inward_high).to(grad.dtype)


def clamp01_hard(x: torch.Tensor) -> torch.Tensor:
    return _Clamp01.apply(x)


# ---------------------------------------------------------------------------
# scalar / numpy ops

def eval_sh_color(sh_color: np.ndarray, view_dir: np.ndarray) -> np.ndarray:
    """View-dependent color: SH evaluation plus 0.5 offset, floored at 0.

    sh_color: (K, 3) or (N, K, 3); view_dir: (3,) or (N, 3).
    """
    coeffs = np.asarray(sh_color, dtype=np.float64)
    single = coeffs.ndim == 2
    coeffs = coeffs[None] if single else coeffs
    dirs = np.asarray(view_dir, dtype=np.float64).reshape(-1, 3)
    degree = int(math.isqrt(coeffs.shape[1])) - 1
    basis = sh.eval_sh_basis(dirs, degree)
    out = np.maximum(np.einsum("nk,nkc->nc", basis, coeffs) + 0.5, 0.0)
    return out[0] if single else out


def apply_shadow(shadow_vector: np.ndarray, weights: np.ndarray) -> float:
    """Deformation shading factor: dot with [1, b], clamped to [0, 1]."""
    shadow_vector = np.asarray(shadow_vector, dtype=np.float64)
    b_aug = np.concatenate([[1.0], np.asarray(weights, dtype=np.float64).reshape(-1)])
    if shadow_vector.shape[-1] != len(b_aug):
        raise ValueError(
            f"shadow vector length {shadow_vector.shape[-1]} != 1 + weights length {len(b_aug) - 1}")
    return float(np.clip(shadow_vector @ b_aug, 0.0, 1.0))


def project_gaussian(posed: PosedGaussian, camera: Camera,
                     config: RenderConfig | None = None,
                     color=(0.0, 0.0, 0.0), alpha: float = 1.0) -> Splat2D | None:
    """EWA first-order projection of one posed Gaussian; None when culled."""
    cfg = config or RenderConfig()
    w = camera.orientation
    t = w @ (np.asarray(posed.world_mean, dtype=np.float64) - camera.position)
    if t[2] <= camera.near:
        return None
    f = camera.focal
    cx, cy = camera.principal
    mean2d = np.asarray([f * t[0] / t[2] + cx, f * t[1] / t[2] + cy])
    J = np.asarray([
        [f / t[2], 0.0, -f * t[0] / t[2] ** 2],
        [0.0, f / t[2], -f * t[1] / t[2] ** 2]])
    M = J @ w
    cov2d = M @ posed.covariance @ M.T + cfg.lowpass * np.eye(2)
    a, b, c = cov2d[0, 0], cov2d[0, 1], cov2d[1, 1]
    lam_max = 0.5 * (a + c) + math.sqrt(max(0.25 * (a - c) ** 2 + b * b, 0.0))
    r3 = 3.0 * math.sqrt(max(lam_max, 0.0))
    if (mean2d[0] + r3 < 0 or mean2d[0] - r3 > camera.width
            or mean2d[1] + r3 < 0 or mean2d[1] - r3 > camera.height):
        return None
    return Splat2D(mean2d, cov2d, float(t[2]), np.asarray(color, dtype=np.float64),
                   float(alpha))


# ---------------------------------------------------------------------------
# torch rasterization core

def _tile_ranges(means2d: np.ndarray, radius: np.ndarray, width: int, height: int,
                 tile: int):
    """Per-splat inclusive tile index ranges covering every pixel center within
    `radius` of the mean. Returns int arrays (x0, x1, y0, y1), empty as x0 > x1."""
    lo_px = np.ceil(means2d[:, 0] - radius[:] - 0.5).astype(np.int64)
    hi_px = np.floor(means2d[:, 0] + radius[:] - 0.5).astype(np.int64)
    lo_py = np.ceil(means2d[:, 1] - radius[:] - 0.5).astype(np.int64)
    hi_py = np.floor(means2d[:, 1] + radius[:] - 0.5).astype(np.int64)
    x0 = np.clip(lo_px, 0, width - 1) // tile
    x1 = np.clip(hi_px, 0, width - 1) // tile
    y0 = np.clip(lo_py, 0, height - 1) // tile
    y1 = np.clip(hi_py, 0, height - 1) // tile
    empty = (hi_px < 0) | (lo_px > width - 1) | (hi_py < 0) | (lo_py > height - 1)
    x1 = np.where(empty, x0 - 1, x1)
    return x0, x1, y0, y1


class _TileComposite(torch.autograd.Function):
    """Depth-ordered alpha compositing with a fused kernel pair.

    The forward kernel is the production path; the backward kernel replays it
    in reverse with hand-derived gradients for screen means, conics, colors
    and base opacities. Finite-difference suites check this math end to end.
    """

    @staticmethod
    def forward(ctx, means2d, conic, colors, sigmas, meta):
        from . import renderer_kernels as rk

        height, width = meta["height"], meta["width"]
        bg = meta["background"]
        img = np.empty((height * width, 3))
        img[:] = bg[None, :]
        trans = np.ones(height * width)
        count = np.zeros(height * width, dtype=np.int32)
        arrays = (means2d.detach().numpy().astype(np.float64),
                  conic.detach().numpy().astype(np.float64),
                  colors.detach().numpy().astype(np.float64),
                  sigmas.detach().numpy().astype(np.float64))
        if len(meta["starts"]):
            rk.forward_kernel(meta["pair_splat"], meta["starts"], meta["ends"],
                              meta["tile_px0"], meta["tile_py0"], meta["tile_w"],
                              meta["tile_h"], width, *arrays, bg,
                              meta["alpha_clip"], meta["alpha_skip"], img, trans, count)
        ctx.meta = meta
        ctx.arrays = arrays
        ctx.trans = trans
        ctx.in_dtype = means2d.dtype
        ctx.n = means2d.shape[0]
        image_t = torch.from_numpy(img.reshape(height, width, 3)).to(means2d.dtype)
        alpha_t = torch.from_numpy((1.0 - trans).reshape(height, width)).to(means2d.dtype)
        count_t = torch.from_numpy(count.reshape(height, width))
        ctx.mark_non_differentiable(count_t)
        return image_t, alpha_t, count_t

    @staticmethod
    def backward(ctx, g_img, g_alpha, _g_count):
        from . import renderer_kernels as rk

        meta = ctx.meta
        height, width = meta["height"], meta["width"]
        up_img = (np.zeros((height * width, 3)) if g_img is None
                  else g_img.detach().numpy().astype(np.float64).reshape(-1, 3))
        up_alpha = (np.zeros(height * width) if g_alpha is None
                    else g_alpha.detach().numpy().astype(np.float64).reshape(-1))
        pair_grads = np.zeros((len(meta["pair_splat"]), 9))
        if len(meta["starts"]):
            rk.backward_kernel(meta["pair_splat"], meta["starts"], meta["ends"],
                               meta["tile_px0"], meta["tile_py0"], meta["tile_w"],
                               meta["tile_h"], width, *ctx.arrays, meta["background"],
                               meta["alpha_clip"], meta["alpha_skip"], ctx.trans,
                               up_img, up_alpha, pair_grads)
        g = rk.scatter_pair_grads(meta["pair_splat"], pair_grads, ctx.n)
        to = ctx.in_dtype
        return (torch.from_numpy(g[:, 0:2]).to(to), torch.from_numpy(g[:, 2:5]).to(to),
                torch.from_numpy(g[:, 6:9]).to(to), torch.from_numpy(g[:, 5]).to(to),
                None)


def rasterize_tensors(means2d: torch.Tensor, conic: torch.Tensor, colors: torch.Tensor,
                      sigmas: torch.Tensor, depths: np.ndarray, width: int, height: int,
                      background, cfg: RenderConfig, radius: np.ndarray):
    """Blend projected splats over a background. All tensor args may carry grad;
    `depths` and `radius` steer sorting/tiling only and are plain numpy."""
    dtype = means2d.dtype if means2d.numel() else torch.float32
    n = means2d.shape[0]
    bg = np.asarray(background, dtype=np.float64)
    tile = cfg.tile_size
    tiles_x = (width + tile - 1) // tile

    splat_of_pair = np.zeros(0, dtype=np.int64)
    starts = np.zeros(0, dtype=np.int64)
    ends = np.zeros(0, dtype=np.int64)
    tile_ids = np.zeros(0, dtype=np.int64)
    if n:
        order = np.argsort(depths, kind="stable")
        means_np = means2d.detach().numpy()
        x0, x1, y0, y1 = _tile_ranges(means_np, radius, width, height, tile)
        # emit (tile, splat) pairs with splats already in depth order
        x0o, y0o = x0[order], y0[order]
        wx = np.maximum(x1[order] - x0o + 1, 0)
        wy = np.maximum(y1[order] - y0o + 1, 0)
        cnt = wx * wy
        total = int(cnt.sum())
        if total:
            first = np.concatenate([[0], np.cumsum(cnt)[:-1]])
            local = np.arange(total) - np.repeat(first, cnt)
            wx_rep = np.repeat(wx, cnt)
            splat_of_pair = np.repeat(order, cnt)
            tile_of_pair = (np.repeat(y0o, cnt) + local // wx_rep) * tiles_x \
                + np.repeat(x0o, cnt) + local % wx_rep
            rank_of_pair = np.repeat(np.arange(n), cnt)
            sort = np.lexsort((rank_of_pair, tile_of_pair))
            tile_of_pair = tile_of_pair[sort]
            splat_of_pair = np.ascontiguousarray(splat_of_pair[sort])
            boundaries = np.flatnonzero(np.diff(tile_of_pair)) + 1
            starts = np.concatenate([[0], boundaries])
            ends = np.concatenate([boundaries, [len(tile_of_pair)]])
            tile_ids = tile_of_pair[starts]

    tx = tile_ids % tiles_x
    ty = tile_ids // tiles_x
    tile_px0 = tx * tile
    tile_py0 = ty * tile
    meta = {
        "pair_splat": splat_of_pair,
        "starts": starts.astype(np.int64),
        "ends": ends.astype(np.int64),
        "tile_px0": tile_px0.astype(np.int64),
        "tile_py0": tile_py0.astype(np.int64),
        "tile_w": np.minimum(tile, width - tile_px0).astype(np.int64),
        "tile_h": np.minimum(tile, height - tile_py0).astype(np.int64),
        "width": width, "height": height, "background": bg,
        "alpha_clip": float(cfg.alpha_clip), "alpha_skip": float(cfg.alpha_skip),
    }
    if n == 0:
        means2d = means2d.reshape(0, 2).to(dtype)
    return _TileComposite.apply(means2d, conic, colors, sigmas, meta)


def project_tensors(means: torch.Tensor, rotations: torch.Tensor, scales: torch.Tensor,
                    sigmas: torch.Tensor, camera: Camera, cfg: RenderConfig):
    """Batched EWA projection. Returns tensors for kept splats plus numpy
    (depths, radius, kept_indices)."""
    dtype = means.dtype
    w = torch.as_tensor(camera.orientation, dtype=dtype)
    campos = torch.as_tensor(camera.position, dtype=dtype)
    t_cam = (means - campos) @ w.T
    tz = t_cam[:, 2]
    front = (tz.detach().numpy() > camera.near).nonzero()[0]
    idx0 = torch.from_numpy(front)
    t_cam = t_cam[idx0]
    tz = t_cam[:, 2]
    f = camera.focal
    cx, cy = camera.principal
    mx = f * t_cam[:, 0] / tz + cx
    my = f * t_cam[:, 1] / tz + cy
    means2d = torch.stack([mx, my], dim=1)

    zeros = torch.zeros_like(tz)
    j = torch.stack([
        torch.stack([f / tz, zeros, -f * t_cam[:, 0] / (tz * tz)], dim=1),
        torch.stack([zeros, f / tz, -f * t_cam[:, 1] / (tz * tz)], dim=1)], dim=1)
    m = j @ w.unsqueeze(0)
    L = rotations[idx0] * scales[idx0].unsqueeze(1)
    cov3d = L @ L.transpose(1, 2)
    cov2d = m @ cov3d @ m.transpose(1, 2)
    cov2d = cov2d + cfg.lowpass * torch.eye(2, dtype=dtype).unsqueeze(0)
    a = cov2d[:, 0, 0]
    b = cov2d[:, 0, 1]
    c = cov2d[:, 1, 1]
    det = a * c - b * b
    conic = torch.stack([c / det, -b / det, a / det], dim=1)

    a_np, b_np, c_np = (v.detach().numpy() for v in (a, b, c))
    lam_max = 0.5 * (a_np + c_np) + np.sqrt(np.maximum(0.25 * (a_np - c_np) ** 2 + b_np ** 2, 0.0))
    r3 = 3.0 * np.sqrt(np.maximum(lam_max, 0.0))
    m_np = means2d.detach().numpy()
    sig_np = sigmas[idx0].detach().numpy()
    visible = ~((m_np[:, 0] + r3 < 0) | (m_np[:, 0] - r3 > camera.width)
                | (m_np[:, 1] + r3 < 0) | (m_np[:, 1] - r3 > camera.height))
    if cfg.alpha_skip > 0:
        visible &= sig_np >= cfg.alpha_skip
        q_cut = 2.0 * np.log(np.maximum(sig_np, 1e-30) / cfg.alpha_skip)
        radius = np.sqrt(np.maximum(q_cut, 0.0) * lam_max) + cfg.radius_margin
    else:
        radius = np.full(len(m_np), 4.0 * (camera.width + camera.height))
    keep = visible.nonzero()[0]
    idx1 = torch.from_numpy(keep)
    return {
        "means2d": means2d[idx1],
        "conic": conic[idx1],
        "depths": tz.detach().numpy()[keep],
        "radius": radius[keep],
        "kept": front[keep],
    }


def render_graph(params: dict, rig: RigBuffers, posed_vertices: torch.Tensor,
                 weights: ExpressionWeights, camera: Camera, background,
                 cfg: RenderConfig, sh_degree: int, sigma_mask: np.ndarray | None = None):
    """Differentiable forward pass from raw per-point parameters to an image.

    params: offset (N,), log_scale (N,2), rotation (N,2), opacity_logit (N,),
    sh_color (N,K,3), shadow_vector (N,B+1) torch tensors (any may require grad).
    sigma_mask, when given, forces the opacity of masked-out points to zero
    (non-destructive prune preview).
    """
    dtype = params["offset"].dtype
    means, rotations, scales = pose_points_torch(
        rig, posed_vertices, params["offset"], params["rotation"], params["log_scale"])
    sigma = torch.sigmoid(params["opacity_logit"])
    if sigma_mask is not None:
        sigma = sigma * torch.from_numpy(sigma_mask.astype(np.float64)).to(dtype)
    campos = torch.as_tensor(camera.position, dtype=dtype)
    view = means - campos
    view = view / torch.linalg.norm(view, dim=1, keepdim=True)
    basis = sh.eval_sh_basis_torch(view, sh_degree)
    color = torch.einsum("nk,nkc->nc", basis, params["sh_color"]) + 0.5
    color = color.clamp(min=0.0)
    b_aug = torch.cat([torch.ones(1, dtype=dtype),
                       torch.as_tensor(weights.weights, dtype=dtype)])
    factor = clamp01_hard(params["shadow_vector"] @ b_aug)
    color = color * factor.unsqueeze(1)

    proj = project_tensors(means, rotations, scales, sigma, camera, cfg)
    kept = torch.from_numpy(proj["kept"])
    image, alpha, count = rasterize_tensors(
        proj["means2d"], proj["conic"], color[kept], sigma[kept],
        proj["depths"], camera.width, camera.height, background, cfg, proj["radius"])
    return image, alpha, count


PARAM_FIELDS = ("offset", "log_scale", "rotation", "opacity_logit", "sh_color", "shadow_vector")


def asset_params(asset: SplatAsset, dtype=torch.float32, requires_grad: bool = False) -> dict:
    params = {
        "offset": torch.from_numpy(asset.offset.copy()),
        "log_scale": torch.from_numpy(asset.log_scale.copy()),
        "rotation": torch.from_numpy(asset.rotation.copy()),
        "opacity_logit": torch.from_numpy(asset.opacity_logit.copy()),
        "sh_color": torch.from_numpy(asset.sh_color.copy()),
        "shadow_vector": torch.from_numpy(asset.shadow_vector.copy()),
    }
    for k in params:
        params[k] = params[k].to(dtype).requires_grad_(requires_grad)
    return params


def render_asset(asset: SplatAsset, mesh: FaceMesh, weights: ExpressionWeights,
                 camera: Camera, background=(0.0, 0.0, 0.0),
                 config: RenderConfig | None = None, prune_sigma: float | None = None,
                 dtype=torch.float32) -> RenderOutput:
    """Pose, shade, project and blend the whole asset. Pure and deterministic."""
    cfg = config or RenderConfig()
    rig = RigBuffers(asset, mesh, dtype=dtype)
    posed = rig.posed_vertices(mesh, weights)
    params = asset_params(asset, dtype=dtype)
    mask = None
    if prune_sigma is not None:
        mask = asset.opacity > prune_sigma
    with torch.no_grad():
        image, alpha, count = render_graph(
            params, rig, posed, weights, camera, background, cfg, asset.sh_degree,
            sigma_mask=mask)
    return RenderOutput(image.numpy().astype(np.float32),
                        alpha.numpy().astype(np.float32),
                        count.numpy().astype(np.int32))


def rasterize(splats: list[Splat2D], image_size: tuple[int, int], background=(0.0, 0.0, 0.0),
              config: RenderConfig | None = None) -> RenderOutput:
    """Blend already-projected splats (op-level API over the tile core)."""
    cfg = config or RenderConfig()
    width, height = image_size
    n = len(splats)
    means = torch.zeros(n, 2, dtype=torch.float64)
    conic = torch.zeros(n, 3, dtype=torch.float64)
    colors = torch.zeros(n, 3, dtype=torch.float64)
    sigmas = torch.zeros(n, dtype=torch.float64)
    depths = np.zeros(n)
    lam_max = np.zeros(n)
    for i, s in enumerate(splats):
        means[i] = torch.as_tensor(s.screen_mean, dtype=torch.float64)
        cov = np.asarray(s.cov2d, dtype=np.float64)
        det = cov[0, 0] * cov[1, 1] - cov[0, 1] ** 2
        conic[i] = torch.as_tensor(
            [cov[1, 1] / det, -cov[0, 1] / det, cov[0, 0] / det])
        colors[i] = torch.as_tensor(np.asarray(s.color, dtype=np.float64))
        sigmas[i] = float(s.alpha)
        depths[i] = s.depth
        a, b, c = cov[0, 0], cov[0, 1], cov[1, 1]
        lam_max[i] = 0.5 * (a + c) + math.sqrt(max(0.25 * (a - c) ** 2 + b * b, 0.0))
    sig_np = sigmas.numpy()
    if cfg.alpha_skip > 0:
        q_cut = 2.0 * np.log(np.maximum(sig_np, 1e-30) / cfg.alpha_skip)
        radius = np.sqrt(np.maximum(q_cut, 0.0) * lam_max) + cfg.radius_margin
        live = sig_np >= cfg.alpha_skip
    else:
        radius = np.full(n, 4.0 * (width + height))
        live = np.ones(n, dtype=bool)
    idx = torch.from_numpy(live.nonzero()[0])
    with torch.no_grad():
        image, alpha, count = rasterize_tensors(
            means[idx], conic[idx], colors[idx], sigmas[idx], depths[live],
            width, height, background, cfg, radius[live])
    return RenderOutput(image.numpy().astype(np.float32),
                        alpha.numpy().astype(np.float32),
                        count.numpy().astype(np.int32))


def backward(asset: SplatAsset, mesh: FaceMesh, weights: ExpressionWeights,
             camera: Camera, upstream: np.ndarray, background=(0.0, 0.0, 0.0),
             config: RenderConfig | None = None, dtype=torch.float32) -> dict:
    """Per-point gradients of sum(image * upstream) for every optimizable field.

    The UV anchor is locked by construction; its gradient is identically zero.
    """
    cfg = config or RenderConfig()
    rig = RigBuffers(asset, mesh, dtype=dtype)
    posed = rig.posed_vertices(mesh, weights)
    params = asset_params(asset, dtype=dtype, requires_grad=True)
    image, _, _ = render_graph(params, rig, posed, weights, camera, background,
                               cfg, asset.sh_degree)
    up = torch.as_tensor(np.asarray(upstream, dtype=np.float64), dtype=dtype)
    leaves = [params[k] for k in PARAM_FIELDS]
    grads = torch.autograd.grad(image, leaves, grad_outputs=up, allow_unused=True)
    out = {}
    for name, leaf, g in zip(PARAM_FIELDS, leaves, grads):
        out[name] = (torch.zeros_like(leaf) if g is None else g).numpy()
    out["uv"] = np.zeros_like(asset.uv)
    return out
