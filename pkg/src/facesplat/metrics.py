"""PSNR and SSIM on linear RGB images."""

from __future__ import annotations

import math

import numpy as np
import torch

PSNR_CAP_DB = 99.0  # reported for identical images instead of +inf

_SSIM_WINDOW = 11
_SSIM_SIGMA = 1.5
_SSIM_C1 = 0.01 ** 2
_SSIM_C2 = 0.03 ** 2


def psnr(image_a: np.ndarray, image_b: np.ndarray, peak: float = 1.0) -> float:
    a = np.asarray(image_a, dtype=np.float64)
    b = np.asarray(image_b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    mse = np.mean((a - b) ** 2)
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(10.0 * math.log10(peak * peak / mse), PSNR_CAP_DB)


def _gaussian_window(dtype) -> torch.Tensor:
    half = (_SSIM_WINDOW - 1) / 2.0
    x = torch.arange(_SSIM_WINDOW, dtype=dtype) - half
    g = torch.exp(-(x * x) / (2.0 * _SSIM_SIGMA ** 2))
    g = g / g.sum()
    return torch.outer(g, g)


def ssim_torch(image_a: torch.Tensor, image_b: torch.Tensor) -> torch.Tensor:
    """Differentiable SSIM, 11x11 Gaussian window, valid region, mean over channels."""
    if image_a.shape != image_b.shape:
        raise ValueError(f"image shapes differ: {tuple(image_a.shape)} vs {tuple(image_b.shape)}")
    if image_a.shape[0] < _SSIM_WINDOW or image_a.shape[1] < _SSIM_WINDOW:
        raise ValueError("images smaller than the SSIM window")
    dtype = image_a.dtype
    c = image_a.shape[2]
    kernel = _gaussian_window(dtype).expand(c, 1, _SSIM_WINDOW, _SSIM_WINDOW)
    a = image_a.permute(2, 0, 1).unsqueeze(0)
    b = image_b.permute(2, 0, 1).unsqueeze(0)

    def blur(x):
        return torch.nn.functional.conv2d(x, kernel, groups=c)

    mu_a = blur(a)
    mu_b = blur(b)
    var_a = blur(a * a) - mu_a * mu_a
    var_b = blur(b * b) - mu_b * mu_b
    cov = blur(a * b) - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + _SSIM_C1) * (2.0 * cov + _SSIM_C2)
    den = (mu_a * mu_a + mu_b * mu_b + _SSIM_C1) * (var_a + var_b + _SSIM_C2)
    return (num / den).mean()


def ssim(image_a: np.ndarray, image_b: np.ndarray) -> float:
    with torch.no_grad():
        return float(ssim_torch(
            torch.as_tensor(np.asarray(image_a, dtype=np.float64)),
            torch.as_tensor(np.asarray(image_b, dtype=np.float64))))
