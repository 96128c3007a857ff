"""Two-stage training: clean-target reconstruction, then render-loss finetuning."""

from __future__ import annotations

import numpy as np
import torch

from ..mesh import ExpressionWeights
from ..metrics import ssim_torch
from ..renderer import RenderConfig, render_graph
from ..rigging import RigBuffers
from .data import TranslatorDataset
from .model import PatchDenoiser, TranslatorConfig
from .schedule import DiffusionSchedule


def _predict(model, schedule, batch, generator):
    x0 = batch["attrs"]
    bsz = x0.shape[0]
    t = torch.randint(1, schedule.steps + 1, (bsz,), generator=generator)
    noise = torch.randn(x0.shape, generator=generator)
    x_t = schedule.noise_to(x0, t, noise)
    pred = model(x_t, batch["uv"], batch["mask"], batch["q"], batch["image"],
                 batch["light"], batch["geom"], t)
    return pred, x0


def train_step_simple(model: PatchDenoiser, schedule: DiffusionSchedule, batch: dict,
                      generator: torch.Generator) -> torch.Tensor:
    """Mean squared error between predicted and clean attributes (masked)."""
    pred, x0 = _predict(model, schedule, batch, generator)
    mask = batch["mask"].unsqueeze(-1)
    denom = mask.sum() * x0.shape[-1]
    loss = (((pred - x0) ** 2) * mask).sum() / torch.clamp(denom, min=1)
    if not torch.isfinite(loss):
        raise FloatingPointError("non-finite simple loss")
    return loss


def _split_params(attrs: torch.Tensor, sh_degree: int):
    k = (sh_degree + 1) ** 2
    return {
        "offset": attrs[:, 0],
        "log_scale": attrs[:, 1:3],
        "rotation": attrs[:, 3:5],
        "opacity_logit": attrs[:, 5],
        "sh_color": attrs[:, 6:6 + 3 * k].reshape(-1, k, 3),
        "shadow_vector": attrs[:, 6 + 3 * k:],
    }


def render_patch_attrs(attrs: torch.Tensor, entry, point_indices: np.ndarray,
                       camera, config: TranslatorConfig,
                       render_config: RenderConfig | None = None):
    """Render destandardized attribute rows rigged at their locked anchors."""
    rig = RigBuffers.from_points(
        entry.mesh, entry.asset.triangle_id[point_indices],
        entry.asset.barycentric[point_indices], config.epsilon)
    weights = ExpressionWeights.neutral(entry.mesh)
    posed = rig.posed_vertices(entry.mesh, weights)
    params = _split_params(attrs, config.sh_degree)
    image, _, _ = render_graph(params, rig, posed, weights, camera, (0.0, 0.0, 0.0),
                               render_config or RenderConfig(), config.sh_degree)
    return image


def train_step_finetune(model: PatchDenoiser, schedule: DiffusionSchedule, batch: dict,
                        dataset: TranslatorDataset, lam: float,
                        generator: torch.Generator,
                        render_config: RenderConfig | None = None):
    """Simple loss plus lam * (L1 + (1 - SSIM)) between renders of the predicted
    and target patch attributes on a fixed per-patch probe camera."""
    pred, x0 = _predict(model, schedule, batch, generator)
    mask = batch["mask"].unsqueeze(-1)
    denom = mask.sum() * x0.shape[-1]
    simple = (((pred - x0) ** 2) * mask).sum() / torch.clamp(denom, min=1)
    if lam == 0.0:
        return simple, {"simple": float(simple), "image": 0.0}

    mean_t = torch.from_numpy(dataset.stats.mean).float()
    std_t = torch.from_numpy(dataset.stats.std).float()
    cfg = dataset.config
    size = cfg.finetune_render_size
    image_terms = []
    for i, (entry, sample) in enumerate(zip(batch["entries"], batch["samples"])):
        m = sample.count
        if m == 0:
            continue
        cam = entry.probe_camera_for(sample.point_indices, size)
        pred_attrs = pred[i, :m] * std_t + mean_t
        gt_attrs = x0[i, :m] * std_t + mean_t
        img_pred = render_patch_attrs(pred_attrs, entry, sample.point_indices, cam, cfg,
                                      render_config)
        with torch.no_grad():
            img_gt = render_patch_attrs(gt_attrs, entry, sample.point_indices, cam, cfg,
                                        render_config)
        l1 = (img_pred - img_gt).abs().mean()
        image_terms.append(l1 + (1.0 - ssim_torch(img_pred, img_gt)))
    image_loss = torch.stack(image_terms).mean() if image_terms else simple * 0.0
    total = simple + lam * image_loss
    if not torch.isfinite(total):
        raise FloatingPointError("non-finite finetune loss")
    return total, {"simple": float(simple), "image": float(image_loss)}


def train_translator(dataset: TranslatorDataset, main_steps: int, finetune_steps: int = 0,
                     batch_size: int = 32, lr: float = 1e-3, lam: float = 0.1,
                     seed: int = 0, model: PatchDenoiser | None = None,
                     finetune_batch_size: int = 4, log_every: int = 100,
                     progress_sink=None):
    """Returns (model, schedule, history)."""
    cfg = dataset.config
    torch.manual_seed(seed)
    if model is None:
        model = PatchDenoiser(cfg)
    schedule = DiffusionSchedule.build(cfg.schedule, cfg.diffusion_steps)
    schedule.validate()
    generator = torch.Generator().manual_seed(seed + 1)
    rng = np.random.default_rng(seed + 2)
    opt = torch.optim.Adam(model.parameters(), lr=lr)
    history = []
    model.train()
    for step in range(1, main_steps + 1):
        batch = dataset.batch(rng, batch_size)
        loss = train_step_simple(model, schedule, batch, generator)
        opt.zero_grad(set_to_none=True)
        loss.backward()
        opt.step()
        history.append({"step": step, "stage": "main", "loss": float(loss)})
        if progress_sink and step % log_every == 0:
            progress_sink(history[-1])
    for p in opt.param_groups:
        p["lr"] = lr * 0.1
    for step in range(1, finetune_steps + 1):
        batch = dataset.batch(rng, finetune_batch_size)
        total, parts = train_step_finetune(model, schedule, batch, dataset, lam, generator)
        opt.zero_grad(set_to_none=True)
        total.backward()
        opt.step()
        history.append({"step": main_steps + step, "stage": "finetune",
                        "loss": float(total), **parts})
        if progress_sink and step % log_every == 0:
            progress_sink(history[-1])
    model.eval()
    return model, schedule, history
