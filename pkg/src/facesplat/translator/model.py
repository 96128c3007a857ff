"""Patch denoiser: transformer decoder over splat tokens with texture/lighting
cross-attention, UV positional encoding and x0 prediction."""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict, field

import numpy as np
import torch
from torch import nn


def uv_positional_encoding(mu: torch.Tensor, dims: int) -> torch.Tensor:
    """Sinusoidal features of a UV pair: component j uses frequency 2^(j//4)*pi,
    cycling (sin u, cos u, sin v, cos v). dims must be divisible by 4."""
    if dims % 4 != 0:
        raise ValueError(f"encoding dims must be divisible by 4, got {dims}")
    n_freq = dims // 4
    freqs = (2.0 ** torch.arange(n_freq, dtype=mu.dtype)) * math.pi
    u = mu[..., 0:1] * freqs
    v = mu[..., 1:2] * freqs
    parts = torch.stack([torch.sin(u), torch.cos(u), torch.sin(v), torch.cos(v)], dim=-1)
    return parts.reshape(*mu.shape[:-1], dims)


@dataclass
class TranslatorConfig:
    attr_dim: int
    sh_degree: int = 3
    num_blendshapes: int = 3
    latent_dim: int = 128
    layers: int = 4
    heads: int = 4
    mlp_ratio: float = 4.0
    pe_dims: int = 64
    image_resolution: int = 32          # E, patch crop resolution
    max_points_per_patch: int = 24
    light_dim: int = 3 * 169
    geometry_dim: int = 4
    diffusion_steps: int = 100
    schedule: str = "cosine"
    patch_grid: int = 16
    # PAS parameters the training assets were built with
    pas_density: float = 16.0
    pas_seed: int = 0
    epsilon: float = 1e-4
    finetune_render_size: int = 48

    @property
    def patch_size(self) -> float:
        return 1.0 / self.patch_grid

    @property
    def image_tokens(self) -> int:
        return (self.image_resolution // 8) ** 2

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TranslatorConfig":
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})

    @classmethod
    def for_asset(cls, sh_degree: int, num_blendshapes: int, **kw) -> "TranslatorConfig":
        attr_dim = 6 + 3 * (sh_degree + 1) ** 2 + num_blendshapes + 1
        return cls(attr_dim=attr_dim, sh_degree=sh_degree,
                   num_blendshapes=num_blendshapes, **kw)


def timestep_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    """Classic sinusoidal embedding of integer timesteps."""
    half = dim // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=torch.float32) / half)
    args = t.float().unsqueeze(-1) * freqs
    return torch.cat([torch.sin(args), torch.cos(args)], dim=-1)


class DecoderBlock(nn.Module):
    def __init__(self, dim, heads, mlp_ratio):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.self_attn = nn.MultiheadAttention(dim, heads, batch_first=True)
        self.norm2 = nn.LayerNorm(dim)
        self.cross_attn = nn.MultiheadAttention(dim, heads, batch_first=True)
        self.norm3 = nn.LayerNorm(dim)
        hidden = int(dim * mlp_ratio)
        self.mlp = nn.Sequential(nn.Linear(dim, hidden), nn.GELU(), nn.Linear(hidden, dim))

    def forward(self, x, kv, pad_mask):
        h = self.norm1(x)
        x = x + self.self_attn(h, h, h, key_padding_mask=pad_mask, need_weights=False)[0]
        h = self.norm2(x)
        x = x + self.cross_attn(h, kv, kv, need_weights=False)[0]
        return x + self.mlp(self.norm3(x))


class PatchDenoiser(nn.Module):
    """Predicts clean standardized attributes from noised ones plus conditions."""

    def __init__(self, config: TranslatorConfig):
        super().__init__()
        self.config = config
        d = config.latent_dim
        self.attr_embed = nn.Linear(config.attr_dim, d)
        self.pe_proj = nn.Sequential(nn.Linear(config.pe_dims, d), nn.GELU(),
                                     nn.Linear(d, d))
        self.t_proj = nn.Sequential(nn.Linear(d, d), nn.GELU(), nn.Linear(d, d))
        self.geom_proj = nn.Linear(config.geometry_dim, d)
        self.light_proj = nn.Linear(config.light_dim, d)
        self.image_encoder = nn.Sequential(
            nn.Conv2d(10, d // 4, 3, stride=2, padding=1), nn.GELU(),
            nn.Conv2d(d // 4, d // 2, 3, stride=2, padding=1), nn.GELU(),
            nn.Conv2d(d // 2, d, 3, stride=2, padding=1))
        self.image_proj = nn.Linear(d, d)
        self.blocks = nn.ModuleList(
            DecoderBlock(d, config.heads, config.mlp_ratio) for _ in range(config.layers))
        self.out_norm = nn.LayerNorm(d)
        self.head = nn.Linear(d, config.attr_dim)
        # relative UV centers of the image encoder's output cells, in [0, P)
        g = config.image_resolution // 8
        cells = (np.stack(np.meshgrid(np.arange(g), np.arange(g), indexing="ij"),
                          axis=-1).reshape(-1, 2) + 0.5) / g * config.patch_size
        self.register_buffer("image_cell_rel", torch.from_numpy(cells).float(),
                             persistent=False)

    def assemble_tokens(self, noised_attrs, uv, mask, q, image, light, geom, t):
        """Build (query, key/value, pad mask) token sequences.

        Query = splat tokens with relative-UV encoding, then the timestep token
        (which also carries the geometry code and the global-offset encoding).
        Key/value = image tokens with relative cell encoding, then the light
        token.
        """
        cfg = self.config
        d = cfg.latent_dim
        rel = uv - q.unsqueeze(1)
        e_a = self.attr_embed(noised_attrs) + self.pe_proj(
            uv_positional_encoding(rel.float(), cfg.pe_dims))
        feat = self.image_encoder(image)                      # (B, d, g, g)
        tokens = feat.flatten(2).transpose(1, 2)              # (B, g*g, d)
        e_i = self.image_proj(tokens) + self.pe_proj(
            uv_positional_encoding(self.image_cell_rel, cfg.pe_dims)).unsqueeze(0)
        e_t = self.t_proj(timestep_embedding(t, d)) + self.geom_proj(geom) \
            + self.pe_proj(uv_positional_encoding(q.float(), cfg.pe_dims))
        e_l = self.light_proj(light)
        query = torch.cat([e_a, e_t.unsqueeze(1)], dim=1)
        kv = torch.cat([e_i, e_l.unsqueeze(1)], dim=1)
        pad = torch.cat([~mask, torch.zeros(mask.shape[0], 1, dtype=torch.bool)], dim=1)
        return query, kv, pad

    def forward(self, noised_attrs: torch.Tensor, uv: torch.Tensor, mask: torch.Tensor,
                q: torch.Tensor, image: torch.Tensor, light: torch.Tensor,
                geom: torch.Tensor, t: torch.Tensor) -> torch.Tensor:
        """noised_attrs (B,M,A); uv (B,M,2) absolute; mask (B,M) True=real;
        q (B,2); image (B,10,E,E); light (B,507); geom (B,G); t (B,) in 1..T."""
        if noised_attrs.shape[0] == 0:
            return noised_attrs.clone()
        x, kv, pad = self.assemble_tokens(noised_attrs, uv, mask, q, image, light,
                                          geom, t)
        for block in self.blocks:
            x = block(x, kv, pad)
        out = self.head(self.out_norm(x[:, :-1]))
        return out * mask.unsqueeze(-1)

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())
