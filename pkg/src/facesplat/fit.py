"""Asset fitting: grid initialization, locked-position optimization with
periodic opacity resets, deferred pruning and quality analytics."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
import torch

from . import sh
from .asset import SplatAsset, logit
from .camera import Camera
from .errors import InvariantError, OptimizationDiverged
from .mesh import ExpressionWeights, FaceMesh, UvIndex, local_uv_to_model_scale
from .metrics import psnr, ssim_torch
from .renderer import RenderConfig, RigBuffers, render_asset, render_graph
from .textures import sample_bilinear


@dataclass
class TrainView:
    camera: Camera
    weights: ExpressionWeights
    target: np.ndarray  # (H, W, 3) linear RGB in [0, 1]

    def validate(self, mesh: FaceMesh) -> None:
        self.camera.validate()
        self.weights.validate(mesh)
        if self.target.shape != (self.camera.height, self.camera.width, 3):
            raise InvariantError(
                f"target image {self.target.shape} does not match camera "
                f"{self.camera.height}x{self.camera.width}")


@dataclass
class FitConfig:
    iterations: int = 2000
    lr_offset: float = 1.6e-4
    lr_scale: float = 5e-3
    lr_rotation: float = 1e-3
    lr_opacity: float = 5e-2
    lr_sh_dc: float = 2.5e-3
    sh_rest_scale: float = 0.05       # rest-band lr = lr_sh_dc * this
    lr_shadow: float | None = None    # must equal lr_sh_dc / B; derived when None
    opacity_reset_interval: int = 1500
    opacity_reset_value: float = 0.01
    d_offset_penalty: float = 0.1
    ssim_weight: float = 0.2
    rng_seed: int = 0
    density_px_per_point: float = 16.0
    snapshot_every: int = 500

    def effective_shadow_lr(self, num_blendshapes: int) -> float:
        derived = self.lr_sh_dc / max(num_blendshapes, 1)
        if self.lr_shadow is not None and not math.isclose(self.lr_shadow, derived,
                                                           rel_tol=1e-9):
            raise InvariantError(
                f"shadow lr must be sh-dc lr / B = {derived:g}, got {self.lr_shadow:g}")
        return derived

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "FitConfig":
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})


@dataclass
class PruneReport:
    thresholds: list
    counts: list
    psnr_db: list

    def validate(self) -> None:
        order = np.argsort(self.thresholds)
        c = np.asarray(self.counts)[order]
        if (np.diff(c) > 0).any():
            raise InvariantError("prune counts must be non-increasing in threshold")

    def to_csv(self, path) -> None:
        lines = ["threshold,count,psnr_db"]
        for t, c, p in zip(self.thresholds, self.counts, self.psnr_db):
            lines.append(f"{t:g},{c},{p:.6f}")
        Path(path).write_text("\n".join(lines) + "\n")


def pixel_aligned_init(mesh: FaceMesh, uv_mask: np.ndarray, density: float, seed: int,
                       diffuse: np.ndarray | None = None, sh_degree: int = 3,
                       epsilon: float = 1e-4) -> SplatAsset:
    """Seeded uniform-grid sampling over the masked UV texels.

    Grid spacing is sqrt(density) texels with a random phase; every landed
    point is anchored to its containing UV triangle and never moves again.
    """
    if density < 1.0:
        raise ValueError("density must be >= 1 pixel per point")
    uv_mask = np.asarray(uv_mask)
    if not uv_mask.any():
        raise InvariantError("empty UV mask")
    res = uv_mask.shape[0]
    spacing = math.sqrt(density)
    rng = np.random.default_rng(seed)
    phase = rng.uniform(0.0, spacing, size=2)
    xs = np.arange(phase[0], res, spacing)
    ys = np.arange(phase[1], res, spacing)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pts = np.stack([gx.reshape(-1), gy.reshape(-1)], axis=1)
    texel = np.minimum(pts.astype(int), res - 1)
    pts = pts[uv_mask[texel[:, 0], texel[:, 1]]]
    uv = pts / res

    tri_ids, bary = UvIndex(mesh).locate(uv)
    ok = tri_ids >= 0
    uv, tri_ids, bary = uv[ok], tri_ids[ok], bary[ok]
    n = len(uv)
    if n == 0:
        raise InvariantError("no grid point landed inside the UV layout")

    uv_scale = local_uv_to_model_scale(mesh)[tri_ids]
    s = (spacing / res) * uv_scale
    k = sh.num_coeffs(sh_degree)
    sh_color = np.zeros((n, k, 3), dtype=np.float32)
    if diffuse is not None:
        base = sample_bilinear(diffuse, uv)
        sh_color[:, 0, :] = (base - 0.5) / sh._C0
    shadow = np.zeros((n, mesh.num_blendshapes + 1), dtype=np.float32)
    shadow[:, 0] = 1.0
    return SplatAsset(
        uv=uv, offset=np.zeros(n), log_scale=np.log(np.stack([s, s], axis=1)),
        rotation=np.tile([1.0, 0.0], (n, 1)), opacity_logit=np.full(n, logit(0.1)),
        sh_color=sh_color, shadow_vector=shadow, triangle_id=tri_ids, barycentric=bary,
        mesh_hash=mesh.content_hash(), sh_degree=sh_degree, epsilon=epsilon,
        component_label=mesh.component_label, density=density, seed=seed)


def _pas_hash(asset: SplatAsset) -> bytes:
    records = np.concatenate(
        [asset.uv.view(np.uint32).astype(np.uint64),
         asset.triangle_id[:, None].astype(np.uint64)], axis=1)
    records = records[np.lexsort(records.T)]
    return hashlib.sha256(records.tobytes()).digest()


def optimize(asset: SplatAsset, mesh: FaceMesh, train_views: list[TrainView],
             config: FitConfig | None = None, render_config: RenderConfig | None = None,
             background=(0.0, 0.0, 0.0), progress_sink=None):
    """Fit the asset to the train views; returns (new asset, loss history).

    Loss per iteration (one random view): L1 + ssim_weight * (1 - SSIM) plus an
    L2 penalty on the normal offsets. Point count and UV anchors never change;
    all opacities reset periodically so redundant points fade instead of
    specializing.
    """
    cfg = config or FitConfig()
    rcfg = render_config or RenderConfig()
    if not train_views:
        raise ValueError("at least one train view required")
    for view in train_views:
        view.validate(mesh)
    out = asset.copy()
    if cfg.iterations <= 0:
        return out, []

    pas_before = _pas_hash(out)
    rig = RigBuffers(out, mesh, dtype=torch.float32)
    posed_cache = {}
    targets = []
    for view in train_views:
        key = view.weights.weights.tobytes()
        if key not in posed_cache:
            posed_cache[key] = rig.posed_vertices(mesh, view.weights)
        targets.append(torch.from_numpy(np.ascontiguousarray(view.target, dtype=np.float32)))

    n = out.num_points
    params = {
        "offset": torch.from_numpy(out.offset.copy()),
        "log_scale": torch.from_numpy(out.log_scale.copy()),
        "rotation": torch.from_numpy(out.rotation.copy()),
        "opacity_logit": torch.from_numpy(out.opacity_logit.copy()),
        "sh_dc": torch.from_numpy(out.sh_color[:, :1].copy()),
        "sh_rest": torch.from_numpy(out.sh_color[:, 1:].copy()),
        "shadow_vector": torch.from_numpy(out.shadow_vector.copy()),
    }
    for v in params.values():
        v.requires_grad_(True)
    shadow_lr = cfg.effective_shadow_lr(mesh.num_blendshapes)
    opt = torch.optim.Adam([
        {"params": [params["offset"]], "lr": cfg.lr_offset},
        {"params": [params["log_scale"]], "lr": cfg.lr_scale},
        {"params": [params["rotation"]], "lr": cfg.lr_rotation},
        {"params": [params["opacity_logit"]], "lr": cfg.lr_opacity},
        {"params": [params["sh_dc"]], "lr": cfg.lr_sh_dc},
        {"params": [params["sh_rest"]], "lr": cfg.lr_sh_dc * cfg.sh_rest_scale},
        {"params": [params["shadow_vector"]], "lr": shadow_lr},
    ], eps=1e-15)

    def write_back():
        with torch.no_grad():
            out.offset = params["offset"].numpy().copy()
            out.log_scale = params["log_scale"].numpy().copy()
            out.rotation = params["rotation"].numpy().copy()
            out.opacity_logit = params["opacity_logit"].numpy().copy()
            out.sh_color = torch.cat([params["sh_dc"], params["sh_rest"]], dim=1).numpy().copy()
            out.shadow_vector = params["shadow_vector"].numpy().copy()
        out.renormalize()

    rng = np.random.default_rng(cfg.rng_seed)
    history = []
    reset_logit = float(logit(cfg.opacity_reset_value))
    for it in range(1, cfg.iterations + 1):
        vi = int(rng.integers(len(train_views)))
        view = train_views[vi]
        posed = posed_cache[view.weights.weights.tobytes()]
        graph_params = {
            "offset": params["offset"], "log_scale": params["log_scale"],
            "rotation": params["rotation"], "opacity_logit": params["opacity_logit"],
            "sh_color": torch.cat([params["sh_dc"], params["sh_rest"]], dim=1),
            "shadow_vector": params["shadow_vector"],
        }
        image, _, _ = render_graph(graph_params, rig, posed, view.weights, view.camera,
                                   background, rcfg, out.sh_degree)
        l1 = (image - targets[vi]).abs().mean()
        ssim_term = 1.0 - ssim_torch(image, targets[vi])
        penalty = cfg.d_offset_penalty * (params["offset"] ** 2).mean()
        loss = l1 + cfg.ssim_weight * ssim_term + penalty
        if not torch.isfinite(loss):
            stats = {k: float(v.detach().abs().max()) for k, v in params.items()}
            raise OptimizationDiverged(f"non-finite loss at iteration {it}; |param|max = {stats}")
        opt.zero_grad(set_to_none=True)
        loss.backward()
        opt.step()
        with torch.no_grad():
            params["shadow_vector"][:, :1].clamp_(0.0, 1.0)
            params["shadow_vector"][:, 1:].clamp_(-1.0, 1.0)
            r = params["rotation"]
            r /= torch.linalg.norm(r, dim=1, keepdim=True).clamp(min=1e-12)
        if cfg.opacity_reset_interval > 0 and it % cfg.opacity_reset_interval == 0 \
                and it < cfg.iterations:
            with torch.no_grad():
                params["opacity_logit"].fill_(reset_logit)
            state = opt.state.get(params["opacity_logit"])
            if state:
                state["exp_avg"].zero_()
                state["exp_avg_sq"].zero_()
        history.append({"iteration": it, "l1": float(l1.detach()),
                        "ssim": float(ssim_term.detach()), "total": float(loss.detach())})
        if it % 500 == 0 and _pas_hash(out) != pas_before:
            raise InvariantError("sampling pattern changed during optimization")
        if progress_sink is not None and (it % cfg.snapshot_every == 0 or it == cfg.iterations):
            write_back()
            progress_sink(it, out.copy(), history[-1])
    write_back()
    return out, history


def save_history_csv(history: list[dict], path) -> None:
    lines = ["iteration,l1,ssim,total"]
    for h in history:
        lines.append(f"{h['iteration']},{h['l1']:.8f},{h['ssim']:.8f},{h['total']:.8f}")
    Path(path).write_text("\n".join(lines) + "\n")


def deferred_prune(asset: SplatAsset, sigma_threshold: float) -> SplatAsset:
    """Drop points with opacity <= threshold; survivors and input are untouched."""
    if not (0.0 <= sigma_threshold < 1.0):
        raise ValueError("prune threshold must lie in [0, 1)")
    keep = asset.opacity > sigma_threshold
    return asset.select(np.where(keep)[0])


def prune_curve(asset: SplatAsset, mesh: FaceMesh, held_out: list[TrainView],
                thresholds, background=(0.0, 0.0, 0.0),
                render_config: RenderConfig | None = None) -> PruneReport:
    """Point count and mean held-out PSNR per prune threshold."""
    if not held_out:
        raise ValueError("at least one held-out view required")
    counts, scores = [], []
    for t in thresholds:
        pruned = deferred_prune(asset, float(t))
        counts.append(pruned.num_points)
        vals = []
        for view in held_out:
            outp = render_asset(pruned, mesh, view.weights, view.camera, background,
                                render_config)
            vals.append(psnr(outp.image, view.target))
        scores.append(float(np.mean(vals)))
    report = PruneReport(list(map(float, thresholds)), counts, scores)
    report.validate()
    return report
