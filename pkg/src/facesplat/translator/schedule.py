"""Forward noising schedule and deterministic reverse stepping."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

from ..errors import InvariantError


@dataclass
class DiffusionSchedule:
    betas: np.ndarray       # (T,) per-step variances, betas[t-1] is step t
    kind: str = "cosine"

    @classmethod
    def cosine(cls, steps: int, s: float = 0.008) -> "DiffusionSchedule":
        t = np.arange(steps + 1) / steps
        f = np.cos((t + s) / (1 + s) * math.pi / 2) ** 2
        alphas_cum = f / f[0]
        betas = 1.0 - alphas_cum[1:] / alphas_cum[:-1]
        return cls(np.clip(betas, 1e-8, 0.999), kind="cosine")

    @classmethod
    def linear(cls, steps: int) -> "DiffusionSchedule":
        # endpoint variances scaled so total noise matches the usual
        # 1000-step 1e-4..0.02 ramp at any step count
        scale = 1000.0 / steps
        betas = np.linspace(scale * 1e-4, min(scale * 0.02, 0.999), steps)
        return cls(np.clip(betas, 1e-8, 0.999), kind="linear")

    @classmethod
    def build(cls, kind: str, steps: int) -> "DiffusionSchedule":
        if kind == "cosine":
            return cls.cosine(steps)
        if kind == "linear":
            return cls.linear(steps)
        raise ValueError(f"unknown schedule kind {kind!r}")

    @property
    def steps(self) -> int:
        return len(self.betas)

    @property
    def alphas_cum(self) -> np.ndarray:
        """Cumulative signal fraction; index t-1 corresponds to timestep t."""
        return np.cumprod(1.0 - self.betas)

    def snr(self, t: int) -> float:
        a = self.alphas_cum[t - 1]
        return float(a / (1.0 - a))

    def validate(self) -> None:
        if not ((self.betas > 0.0) & (self.betas < 1.0)).all():
            raise InvariantError("betas must lie in (0, 1)")
        cum = self.alphas_cum
        if not (np.diff(cum) < 0.0).all():
            raise InvariantError("cumulative signal products must strictly decrease")
        if self.snr(self.steps) >= 0.01:
            raise InvariantError(
                f"terminal SNR {self.snr(self.steps):.4f} too high; schedule too mild")

    def noise_to(self, x0: torch.Tensor, t: torch.Tensor, noise: torch.Tensor) -> torch.Tensor:
        """Corrupt clean samples to timestep t (per-sample t, 1-based)."""
        cum = torch.as_tensor(self.alphas_cum, dtype=x0.dtype)
        a = cum[t - 1].view(-1, *([1] * (x0.dim() - 1)))
        return torch.sqrt(a) * x0 + torch.sqrt(1.0 - a) * noise

    def ddim_step(self, x_t: torch.Tensor, x0_pred: torch.Tensor, t: int,
                  t_prev: int) -> torch.Tensor:
        """Deterministic reverse step t -> t_prev using the clean prediction."""
        cum = self.alphas_cum
        a_t = float(cum[t - 1])
        eps = (x_t - math.sqrt(a_t) * x0_pred) / math.sqrt(1.0 - a_t)
        if t_prev <= 0:
            return x0_pred
        a_p = float(cum[t_prev - 1])
        return math.sqrt(a_p) * x0_pred + math.sqrt(1.0 - a_p) * eps

    def inference_timesteps(self, num: int) -> list[int]:
        """Descending subsequence of timesteps ending at 1."""
        num = min(num, self.steps)
        ts = np.unique(np.linspace(1, self.steps, num).round().astype(int))[::-1]
        return [int(t) for t in ts]
