import numpy as np
import pytest
import torch

from conftest import make_random_asset
from facesplat.camera import look_at
from facesplat.mesh import ExpressionWeights
from facesplat.renderer import RenderConfig, backward, clamp01_hard
from grad_utils import GRAD_CONFIG, build_grad_scene, check_scene_gradients


def test_gradients_match_finite_differences(small_sphere):
    rng = np.random.default_rng(42)
    asset, cam, w = build_grad_scene(small_sphere, rng)
    worst = check_scene_gradients(asset, small_sphere, w, cam, rng)
    assert worst <= 1e-3


def test_zero_upstream_gives_zero_gradients(small_sphere, rng):
    asset, cam, w = build_grad_scene(small_sphere, rng)
    up = np.zeros((cam.height, cam.width, 3))
    grads = backward(asset, small_sphere, w, cam, up, config=GRAD_CONFIG)
    for name, g in grads.items():
        assert np.abs(g).max() == 0.0, name


def test_shadow_gradient_zero_at_clamp_boundary(small_sphere, rng):
    # neutral-only shadow puts the factor exactly at the upper clamp; an
    # upstream that rewards brightening pushes outward and must see zero
    asset, cam, w = build_grad_scene(small_sphere, rng)
    asset.shadow_vector[:] = 0.0
    asset.shadow_vector[:, 0] = 1.0
    up = -np.ones((cam.height, cam.width, 3))  # loss falls as the image brightens
    grads = backward(asset, small_sphere, w, cam, up, config=GRAD_CONFIG)
    assert np.abs(grads["shadow_vector"]).max() == 0.0
    # a darkening pull points back inside the clamp and does flow
    grads_in = backward(asset, small_sphere, w, cam, -up, config=GRAD_CONFIG)
    assert np.abs(grads_in["shadow_vector"]).max() > 0.0


def test_clamp01_projected_subgradient():
    x = torch.tensor([-0.5, 0.0, 0.5, 1.0, 1.5], dtype=torch.float64, requires_grad=True)
    clamp01_hard(x).sum().backward()  # upstream +1 everywhere
    # +1 pushes values up: blocked at/above 1, allowed at/below 0 (inward)
    assert x.grad.tolist() == [1.0, 1.0, 1.0, 0.0, 0.0]
    y = torch.tensor([-0.5, 0.0, 0.5, 1.0, 1.5], dtype=torch.float64, requires_grad=True)
    (-clamp01_hard(y)).sum().backward()  # upstream -1: pushes values down
    assert y.grad.tolist() == [0.0, 0.0, -1.0, -1.0, -1.0]


def test_uv_gradient_identically_zero(small_sphere, rng):
    asset, cam, w = build_grad_scene(small_sphere, rng)
    up = rng.normal(size=(cam.height, cam.width, 3))
    grads = backward(asset, small_sphere, w, cam, up, config=GRAD_CONFIG)
    assert grads["uv"].shape == asset.uv.shape
    assert np.abs(grads["uv"]).max() == 0.0
