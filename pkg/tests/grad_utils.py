"""Finite-difference gradient harness shared by the unit and acceptance suites."""

import numpy as np
import torch

from conftest import make_random_asset
from facesplat.camera import look_at
from facesplat.mesh import ExpressionWeights
from facesplat.renderer import RenderConfig, backward, render_asset

# Smooth-region config: no skip threshold, so the image is differentiable in
# every parameter (the skip/cull decisions stay fixed under FD perturbations).
GRAD_CONFIG = RenderConfig(alpha_skip=0.0)

FIELD_SHAPES = ("offset", "log_scale", "rotation", "opacity_logit", "sh_color",
                "shadow_vector")


def build_grad_scene(mesh, rng, n_points=4, image=24):
    """Random scene kept away from clamp kinks and cull boundaries."""
    for attempt in range(50):
        asset = make_random_asset(mesh, n_points, rng, sh_degree=1)
        asset.opacity_logit = np.asarray(
            np.log(1 / np.clip(rng.uniform(0.25, 0.85, n_points), 1e-6, 1) - 1) * -1,
            dtype=np.float32)
        cam = look_at(rng.normal(size=3) * 0.4 + [3.2, 0, 0], [0, 0, 0],
                      fov=45, width=image, height=image)
        w = ExpressionWeights(
            rng.uniform(0.1, 0.9, size=mesh.num_blendshapes).astype(np.float32))
        b_aug = np.concatenate([[1.0], w.weights])
        dots = asset.shadow_vector @ b_aug
        if (np.abs(dots - 1.0) < 0.02).any() or (dots < 0.02).any():
            continue
        # colors comfortably positive at the used view directions
        from facesplat.rigging import pose_asset
        from facesplat.renderer import eval_sh_color
        posed = pose_asset(asset, mesh, w)
        ok = True
        for i, p in enumerate(posed):
            view = p.world_mean - cam.position
            view /= np.linalg.norm(view)
            if eval_sh_color(asset.sh_color[i], view).min() < 0.05:
                ok = False
                break
        if ok:
            return asset, cam, w
    raise RuntimeError("could not build a smooth gradient scene")


def loss_and_upstream(asset, mesh, w, cam, target):
    out = render_asset(asset, mesh, w, cam, config=GRAD_CONFIG, dtype=torch.float64)
    diff = out.image.astype(np.float64) - target
    return float((diff ** 2).sum()), 2.0 * diff


def fd_field_gradient(asset, mesh, w, cam, target, field, h=1e-3):
    """Central finite differences of the L2 loss wrt one field, f64 path."""
    base = getattr(asset, field)
    grad = np.zeros_like(base, dtype=np.float64)
    flat = grad.reshape(-1)
    for j in range(flat.size):
        for sign in (+1.0, -1.0):
            clone = asset.copy()
            arr = getattr(clone, field).reshape(-1)
            arr[j] += sign * h
            loss, _ = loss_and_upstream(clone, mesh, w, cam, target)
            flat[j] += sign * loss
    return grad / (2.0 * h)


def check_scene_gradients(asset, mesh, w, cam, rng, rel_tol=1e-3, h=1e-3):
    """Compare every field's analytic gradient against central differences.

    Returns the max relative error seen (relative to the field's gradient
    magnitude scale).
    """
    target = rng.uniform(0.0, 1.0, size=(cam.height, cam.width, 3))
    _, upstream = loss_and_upstream(asset, mesh, w, cam, target)
    got = backward(asset, mesh, w, cam, upstream, config=GRAD_CONFIG,
                   dtype=torch.float64)
    assert np.array_equal(got["uv"], np.zeros_like(asset.uv))
    worst = 0.0
    for field in FIELD_SHAPES:
        ref = fd_field_gradient(asset, mesh, w, cam, target, field, h=h)
        g = got[field].reshape(ref.shape)
        scale = max(np.abs(ref).max(), 1e-8)
        rel = np.abs(g - ref).max() / scale
        worst = max(worst, rel)
        assert rel <= rel_tol, f"{field}: rel err {rel:.2e}"
    return worst
