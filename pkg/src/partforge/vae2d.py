"""Convolutional image VAE for multi-view part renders.

Encodes (H, W, 5) images with three stride-2 stages (spatial factor 8) into
a token grid of (H/8)*(W/8) rows of dimension `latent_dim`. The decoder
mirrors the encoder; `decode` clamps to [0, 1] while the training loss uses
the raw pre-clamp output so gradients flow at the range boundary.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np
import torch
import torch.nn as nn

from .errors import ParameterError
from .layers import as_tensor

LOGVAR_CLAMP = 10.0


@dataclass(frozen=True)
class Vae2dConfig:
    image_size: int = 64
    channels: int = 5
    latent_dim: int = 16
    base_width: int = 32
    kl_weight: float = 1e-5

    @property
    def latent_size(self):
        return self.image_size // 8

    @property
    def tokens(self):
        return self.latent_size * self.latent_size

    def to_json(self):
        return asdict(self)


@dataclass
class VaeOutput2D:
    mean: torch.Tensor        # (..., tokens, latent_dim)
    log_variance: torch.Tensor
    sample: torch.Tensor
    noise: torch.Tensor


class ImageVae(nn.Module):
    def __init__(self, cfg: Vae2dConfig):
        super().__init__()
        self.cfg = cfg
        w = cfg.base_width
        act = nn.GELU()
        self.enc = nn.Sequential(
            nn.Conv2d(cfg.channels, w, 3, padding=1), act,
            nn.Conv2d(w, w * 2, 4, stride=2, padding=1), act,
            nn.Conv2d(w * 2, w * 4, 4, stride=2, padding=1), act,
            nn.Conv2d(w * 4, w * 4, 4, stride=2, padding=1), act,
            nn.Conv2d(w * 4, 2 * cfg.latent_dim, 3, padding=1),
        )
        self.dec = nn.Sequential(
            nn.Conv2d(cfg.latent_dim, w * 4, 3, padding=1), act,
            nn.ConvTranspose2d(w * 4, w * 4, 4, stride=2, padding=1), act,
            nn.ConvTranspose2d(w * 4, w * 2, 4, stride=2, padding=1), act,
            nn.ConvTranspose2d(w * 2, w, 4, stride=2, padding=1), act,
            nn.Conv2d(w, cfg.channels, 3, padding=1),
        )

    def _check_image(self, img):
        hw = (self.cfg.image_size, self.cfg.image_size, self.cfg.channels)
        if img.shape[-3:] != hw:
            raise ParameterError(f"expected image shaped (..., {hw[0]}, {hw[1]}, {hw[2]}), got {tuple(img.shape)}")

    def _tokens_from_map(self, m):
        # (B, C, h, w) -> (B, h*w, C)
        return m.flatten(2).transpose(1, 2)

    def _map_from_tokens(self, t):
        b = t.shape[0]
        hs = self.cfg.latent_size
        return t.transpose(1, 2).reshape(b, self.cfg.latent_dim, hs, hs)

    def encode(self, image, sample_seed=None) -> VaeOutput2D:
        """image: (H, W, C) or (B, H, W, C), values in [0, 1]."""
        x = as_tensor(image, next(self.parameters()).dtype)
        squeeze = x.dim() == 3
        if squeeze:
            x = x[None]
        self._check_image(x)
        h = self.enc(x.permute(0, 3, 1, 2))
        mean_map, logvar_map = h.chunk(2, dim=1)
        mean = self._tokens_from_map(mean_map)
        logvar = self._tokens_from_map(logvar_map).clamp(-LOGVAR_CLAMP, LOGVAR_CLAMP)
        if sample_seed is None:
            noise = torch.zeros_like(mean)  # deterministic: sample == mean
        else:
            gen = torch.Generator().manual_seed(int(sample_seed))
            noise = torch.randn(mean.shape, generator=gen, dtype=mean.dtype)
        sample = mean + torch.exp(0.5 * logvar) * noise
        if squeeze:
            mean, logvar, sample, noise = mean[0], logvar[0], sample[0], noise[0]
        return VaeOutput2D(mean=mean, log_variance=logvar, sample=sample, noise=noise)

    def decode_raw(self, tokens) -> torch.Tensor:
        """Unclamped reconstruction, used by the training loss."""
        t = as_tensor(tokens, next(self.parameters()).dtype)
        squeeze = t.dim() == 2
        if squeeze:
            t = t[None]
        if t.shape[-2:] != (self.cfg.tokens, self.cfg.latent_dim):
            raise ParameterError(
                f"tokens must be (..., {self.cfg.tokens}, {self.cfg.latent_dim}), got {tuple(t.shape)}"
            )
        img = self.dec(self._map_from_tokens(t)).permute(0, 2, 3, 1)
        return img[0] if squeeze else img

    def decode(self, tokens) -> torch.Tensor:
        """Reconstruction clamped to [0, 1]."""
        with torch.no_grad():
            return self.decode_raw(tokens).clamp(0.0, 1.0)

    def frozen_clone(self) -> "ImageVae":
        clone = ImageVae(self.cfg)
        clone.load_state_dict(self.state_dict())
        clone.eval()
        for p in clone.parameters():
            p.requires_grad_(False)
        return clone


def vae2d_loss(model: ImageVae, output: VaeOutput2D, target, beta=None):
    """L2 reconstruction (pre-clamp) + beta * KL; returns (total, components)."""
    beta = model.cfg.kl_weight if beta is None else beta
    pred = model.decode_raw(output.sample)
    tgt = as_tensor(target, pred.dtype)
    rec = (pred - tgt).pow(2).mean()
    mu, lv = output.mean, output.log_variance
    kl = 0.5 * (mu.pow(2) + lv.exp() - 1.0 - lv).mean()
    total = rec + beta * kl
    return total, {"rec": rec, "kl": kl, "total": total}


def psnr(pred, target) -> float:
    """Peak signal-to-noise ratio in dB for images in [0, 1]."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    mse = np.mean((pred - target) ** 2)
    if mse == 0:
        return float("inf")
    return float(10.0 * np.log10(1.0 / mse))
