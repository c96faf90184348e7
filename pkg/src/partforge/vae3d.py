"""3D part VAE: surface samples -> geometric tokens -> occupancy field.

The encoder cross-attends a fixed set of learned query tokens to per-point
features (absolute Fourier position encoding + normals), which makes it
permutation-invariant over input points and yields exactly `tokens` rows.
The decoder answers occupancy queries by cross-attending query-point
features to the token set; surfaces are extracted from a logit grid by
marching cubes at level 0.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np
import torch
import torch.nn as nn

from .errors import DegenerateOutputError, NumericError, ParameterError
from .geometry import TriangleMesh
from .layers import CrossAttnBlock, FourierEmbed, Mlp, SelfAttnBlock, as_tensor

QUERY_DOMAIN = 1.2   # occupancy queries must lie in [-QUERY_DOMAIN, QUERY_DOMAIN]^3
GRID_DOMAIN = 1.1    # isosurface grids span [-GRID_DOMAIN, GRID_DOMAIN]^3
LOGVAR_CLAMP = 10.0


@dataclass(frozen=True)
class Vae3dConfig:
    num_points: int = 4096
    tokens: int = 64
    token_dim: int = 32
    width: int = 64
    num_heads: int = 4
    encoder_blocks: int = 4   # 1 cross-attention + (blocks-1) self-attention
    decoder_blocks: int = 2
    fourier_bands: int = 6
    kl_weight: float = 1e-4

    def to_json(self):
        return asdict(self)


@dataclass
class VaeOutput3D:
    mean: torch.Tensor        # (..., T, D)
    log_variance: torch.Tensor
    sample: torch.Tensor      # mean + exp(0.5 * log_variance) * noise
    noise: torch.Tensor


class GeomVae(nn.Module):
    def __init__(self, cfg: Vae3dConfig):
        super().__init__()
        self.cfg = cfg
        self.embed = FourierEmbed(cfg.fourier_bands)
        self.point_in = nn.Linear(self.embed.out_dim + 3, cfg.width)
        self.query_tokens = nn.Parameter(torch.randn(cfg.tokens, cfg.width) * 0.02)
        self.enc_cross = CrossAttnBlock(cfg.width, cfg.num_heads)
        self.enc_self = nn.ModuleList(
            SelfAttnBlock(cfg.width, cfg.num_heads) for _ in range(cfg.encoder_blocks - 1)
        )
        self.enc_norm = nn.LayerNorm(cfg.width)
        self.to_mean = nn.Linear(cfg.width, cfg.token_dim)
        self.to_logvar = nn.Linear(cfg.width, cfg.token_dim)

        self.dec_in = nn.Linear(cfg.token_dim, cfg.width)
        self.dec_self = nn.ModuleList(
            SelfAttnBlock(cfg.width, cfg.num_heads) for _ in range(cfg.decoder_blocks)
        )
        self.query_in = nn.Linear(self.embed.out_dim, cfg.width)
        self.dec_cross = CrossAttnBlock(cfg.width, cfg.num_heads)
        self.dec_norm = nn.LayerNorm(cfg.width)
        self.occ_head = Mlp(cfg.width, cfg.width)
        self.occ_out = nn.Linear(cfg.width, 1)

    # ------------------------------------------------------------ encode --

    def _check_points(self, p, q):
        if p.shape != q.shape or p.shape[-2:] != (self.cfg.num_points, 3):
            raise ParameterError(
                f"expected (..., {self.cfg.num_points}, 3) points and normals, "
                f"got {tuple(p.shape)} / {tuple(q.shape)}"
            )
        if not (torch.isfinite(p).all() and torch.isfinite(q).all()):
            raise NumericError("non-finite surface samples")
        norms = q.norm(dim=-1)
        if (norms - 1.0).abs().max() > 1e-3:
            raise ParameterError("normals must have unit rows")

    def encode(self, points, normals, sample_seed=None) -> VaeOutput3D:
        """points, normals: (S, 3) or (B, S, 3) tensors/arrays."""
        p = as_tensor(points, next(self.parameters()).dtype)
        q = as_tensor(normals, p.dtype)
        squeeze = p.dim() == 2
        if squeeze:
            p, q = p[None], q[None]
        self._check_points(p, q)
        feats = self.point_in(torch.cat([self.embed(p), q], dim=-1))
        x = self.query_tokens[None].expand(p.shape[0], -1, -1)
        x = self.enc_cross(x, feats)
        for blk in self.enc_self:
            x = blk(x)
        x = self.enc_norm(x)
        mean = self.to_mean(x)
        logvar = self.to_logvar(x).clamp(-LOGVAR_CLAMP, LOGVAR_CLAMP)
        if sample_seed is None:
            noise = torch.zeros_like(mean)  # deterministic: sample == mean
        else:
            gen = torch.Generator().manual_seed(int(sample_seed))
            noise = torch.randn(mean.shape, generator=gen, dtype=mean.dtype)
        sample = mean + torch.exp(0.5 * logvar) * noise
        if squeeze:
            mean, logvar, sample, noise = mean[0], logvar[0], sample[0], noise[0]
        return VaeOutput3D(mean=mean, log_variance=logvar, sample=sample, noise=noise)

    # ------------------------------------------------------------ decode --

    def decode_occupancy(self, tokens, queries) -> torch.Tensor:
        """tokens: (T, D) or (B, T, D); queries: (M, 3) or (B, M, 3) -> logits."""
        z = as_tensor(tokens, next(self.parameters()).dtype)
        qr = as_tensor(queries, z.dtype)
        squeeze = z.dim() == 2
        if squeeze:
            z = z[None]
        if qr.dim() == 2:
            qr = qr[None].expand(z.shape[0], -1, -1)
        if z.shape[-2:] != (self.cfg.tokens, self.cfg.token_dim):
            raise ParameterError(f"tokens must be (..., {self.cfg.tokens}, {self.cfg.token_dim})")
        if qr.shape[-1] != 3:
            raise ParameterError("queries must be (..., M, 3)")
        if qr.abs().max() > QUERY_DOMAIN + 1e-6:
            raise ParameterError(f"queries must lie within [-{QUERY_DOMAIN}, {QUERY_DOMAIN}]^3")
        h = self.dec_in(z)
        for blk in self.dec_self:
            h = blk(h)
        qf = self.query_in(self.embed(qr))
        qf = self.dec_cross(qf, h)
        logits = self.occ_out(self.occ_head(self.dec_norm(qf)) + qf).squeeze(-1)
        return logits[0] if squeeze else logits

    def extract_surface(self, tokens, grid_resolution: int, chunk: int = 16384) -> TriangleMesh:
        """Marching-cubes isosurface of the occupancy logits at level 0."""
        if grid_resolution not in (32, 64):
            raise ParameterError("grid_resolution must be 32 or 64")
        axis = np.linspace(-GRID_DOMAIN, GRID_DOMAIN, grid_resolution)
        gx, gy, gz = np.meshgrid(axis, axis, axis, indexing="ij")
        pts = np.stack([gx, gy, gz], axis=-1).reshape(-1, 3).astype(np.float32)
        logits = np.empty(len(pts), dtype=np.float32)
        with torch.no_grad():
            for s in range(0, len(pts), chunk):
                sl = slice(s, min(s + chunk, len(pts)))
                logits[sl] = self.decode_occupancy(tokens, pts[sl]).float().numpy()
        volume = logits.reshape(grid_resolution, grid_resolution, grid_resolution)
        return grid_to_mesh(volume, GRID_DOMAIN, level=0.0)

    def frozen_clone(self) -> "GeomVae":
        clone = GeomVae(self.cfg)
        clone.load_state_dict(self.state_dict())
        clone.eval()
        for p in clone.parameters():
            p.requires_grad_(False)
        return clone


def grid_to_mesh(volume: np.ndarray, domain: float, level: float = 0.0) -> TriangleMesh:
    """Closed isosurface of a scalar grid spanning [-domain, domain]^3.

    The grid is padded with a strongly-outside value so the extracted
    surface is watertight by construction.
    """
    from skimage import measure

    res = volume.shape[0]
    cell = 2.0 * domain / (res - 1)
    padded = np.pad(volume.astype(np.float64), 1, constant_values=-1e4)
    if padded.max() <= level or padded.min() >= level:
        raise DegenerateOutputError("occupancy field has no zero crossing (empty or full)")
    verts, faces, _, _ = measure.marching_cubes(padded, level=level)
    verts = verts * cell + (-domain - cell)
    return TriangleMesh(verts, faces)


def vae3d_loss(model: GeomVae, output: VaeOutput3D, queries, labels, beta=None):
    """BCE occupancy reconstruction + beta * KL; returns (total, components)."""
    beta = model.cfg.kl_weight if beta is None else beta
    logits = model.decode_occupancy(output.sample, queries)
    target = as_tensor(labels, logits.dtype)
    bce = nn.functional.binary_cross_entropy_with_logits(logits, target)
    mu, lv = output.mean, output.log_variance
    kl = 0.5 * (mu.pow(2) + lv.exp() - 1.0 - lv).mean()
    total = bce + beta * kl
    return total, {"bce": bce, "kl": kl, "total": total}
