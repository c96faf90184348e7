"""Synchronized dual denoiser over per-part geometry and image tokens.

One transformer stack per modality denoises all N part slots plus a global
slot in a single forward pass. Information is exchanged three ways:

* cross-part attention: in alternating blocks the self-attention keys/values
  are the concatenation of all unmasked slots' tokens (global included);
* multi-view attention: every 2D block's self-attention attends all views of
  the same slot;
* cross-modality attention: residual blocks with zero-initialized output
  maps let 3D features query a part's view tokens and vice versa.

Part identity is carried only by conditions (captions, box latents); there
is no per-slot positional embedding, so slot permutation equivariance is
exact. Box latents enter the 3D stack through zero-initialized residual
cross-attention; box wireframe latents enter only the global 2D slot
through a small adapter copying the first 2D blocks.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, asdict, field

import numpy as np
import torch
import torch.nn as nn

from .errors import NumericError, ParameterError
from .layers import (
    Attention,
    Mlp,
    as_tensor,
    scaled_dot_attention,
    timestep_embedding,
    zero_linear,
)

MAX_PARTS = 8


@dataclass(frozen=True)
class DenoiserConfig:
    width: int = 256
    num_heads: int = 4
    num_blocks: int = 6
    mlp_ratio: float = 2.0
    geom_tokens: int = 64
    geom_dim: int = 32
    image_tokens: int = 64
    image_dim: int = 16
    num_views: int = 4
    caption_length: int = 8
    vocab_size: int = 64
    text_dim: int = 64
    t_max: int = 1000
    cross_part_blocks: tuple = (1, 3, 5)
    cross_modality_after: tuple = (1, 3)
    box_inject_after: tuple = (1, 3)
    controlnet_blocks: int = 2
    controlnet_inject_after: tuple = (0, 1)

    def to_json(self):
        d = asdict(self)
        for k in ("cross_part_blocks", "cross_modality_after", "box_inject_after",
                  "controlnet_inject_after"):
            d[k] = list(d[k])
        return d

    @staticmethod
    def from_json(d):
        d = dict(d)
        for k in ("cross_part_blocks", "cross_modality_after", "box_inject_after",
                  "controlnet_inject_after"):
            d[k] = tuple(d[k])
        return DenoiserConfig(**d)


@dataclass
class DenoiserState:
    """All N parts' noisy latents plus the global slot at one timestep."""

    geom: torch.Tensor            # (N, T3, D3)
    image: torch.Tensor           # (N, v, T2, D2)
    part_mask: torch.Tensor       # (N,) bool; True = real part
    box_latents: torch.Tensor     # (N, T3, D3)
    captions: torch.Tensor        # (N, L) long token ids
    global_geom: torch.Tensor     # (T3, D3)
    global_image: torch.Tensor    # (v, T2, D2)
    global_caption: torch.Tensor  # (L,) long
    t: int = 0

    def num_parts(self):
        return int(self.part_mask.sum())

    def validate(self):
        n = self.geom.shape[0]
        if not (1 <= self.num_parts() <= MAX_PARTS):
            raise ParameterError("part_mask must select between 1 and 8 real parts")
        for name in ("geom", "image", "box_latents"):
            arr = getattr(self, name)
            if arr.shape[0] != n:
                raise ParameterError(f"{name} first dim must match part count")
            if not bool(arr[~self.part_mask].eq(0).all()):
                raise ParameterError(f"masked entries of {name} must be zeros")
        return self

    def clone(self):
        return DenoiserState(
            geom=self.geom.clone(), image=self.image.clone(),
            part_mask=self.part_mask.clone(), box_latents=self.box_latents.clone(),
            captions=self.captions.clone(), global_geom=self.global_geom.clone(),
            global_image=self.global_image.clone(), global_caption=self.global_caption.clone(),
            t=self.t,
        )


@dataclass
class DenoisePrediction:
    eps_geom: torch.Tensor          # (N, T3, D3)
    eps_image: torch.Tensor         # (N, v, T2, D2)
    eps_global_geom: torch.Tensor   # (T3, D3)
    eps_global_image: torch.Tensor  # (v, T2, D2)


def cross_part_attention(attn: Attention, norm: nn.LayerNorm, tokens, mask):
    """Residual attention where every slot's queries attend the concatenation
    of all unmasked slots' tokens (its own included).

    tokens: (S, L, W); mask: (S,) bool. With a single slot this is exactly
    ordinary self-attention through the same module.
    """
    if not bool(mask.any()):
        raise ParameterError("cross_part_attention needs at least one unmasked slot")
    h = norm(tokens)
    kv = h[mask].reshape(1, -1, h.shape[-1]).expand(h.shape[0], -1, -1)
    return tokens + attn(h, kv)


def multi_view_attention(attn: Attention, norm: nn.LayerNorm, tokens):
    """Residual attention where each view attends all views of the same slot.

    tokens: (S, v, L, W). With v == 1 this is ordinary self-attention.
    """
    s, v, L, w = tokens.shape
    h = norm(tokens)
    kv = h.reshape(s, 1, v * L, w).expand(s, v, v * L, w)
    return tokens + attn(h, kv)


class GeomBlock(nn.Module):
    """3D-branch block: (cross-part | self) attention, caption cross-attn, MLP."""

    def __init__(self, cfg: DenoiserConfig):
        super().__init__()
        w = cfg.width
        self.norm1 = nn.LayerNorm(w)
        self.attn = Attention(w, cfg.num_heads)
        self.norm_c = nn.LayerNorm(w)
        self.norm_cond = nn.LayerNorm(w)
        self.cond_attn = Attention(w, cfg.num_heads)
        self.norm2 = nn.LayerNorm(w)
        self.mlp = Mlp(w, int(w * cfg.mlp_ratio))

    def forward(self, x, mask, cond, cross_part: bool):
        if cross_part:
            x = cross_part_attention(self.attn, self.norm1, x, mask)
        else:
            h = self.norm1(x)
            x = x + self.attn(h, h)
        x = x + self.cond_attn(self.norm_c(x), self.norm_cond(cond))
        return x + self.mlp(self.norm2(x))


class ImageBlock(nn.Module):
    """2D-branch block: multi-view attention (always), per-view cross-part
    attention (selected blocks), caption cross-attn, MLP."""

    def __init__(self, cfg: DenoiserConfig, with_cross_part: bool):
        super().__init__()
        w = cfg.width
        self.norm1 = nn.LayerNorm(w)
        self.attn = Attention(w, cfg.num_heads)
        self.with_cross_part = with_cross_part
        if with_cross_part:
            self.norm_p = nn.LayerNorm(w)
            self.part_attn = Attention(w, cfg.num_heads)
        self.norm_c = nn.LayerNorm(w)
        self.norm_cond = nn.LayerNorm(w)
        self.cond_attn = Attention(w, cfg.num_heads)
        self.norm2 = nn.LayerNorm(w)
        self.mlp = Mlp(w, int(w * cfg.mlp_ratio))

    def forward(self, x, mask, cond, cross_part: bool):
        x = multi_view_attention(self.attn, self.norm1, x)
        if cross_part and self.with_cross_part:
            # each view attends the same view of all unmasked slots
            s, v, L, w = x.shape
            h = self.norm_p(x)
            kv = h[mask].transpose(0, 1).reshape(1, v, -1, w).expand(s, v, -1, w)
            x = x + self.part_attn(h, kv)
        s, v = x.shape[0], x.shape[1]
        cond_v = self.norm_cond(cond)[:, None].expand(s, v, -1, -1)
        x = x + self.cond_attn(self.norm_c(x), cond_v)
        return x + self.mlp(self.norm2(x))


class CrossModalityBlock(nn.Module):
    """Bidirectional geometry <-> image exchange with zero-initialized output
    maps, so a fresh block is an exact identity."""

    def __init__(self, cfg: DenoiserConfig):
        super().__init__()
        w = cfg.width
        self.norm_g = nn.LayerNorm(w)
        self.norm_f = nn.LayerNorm(w)
        self.g_from_f = Attention(w, cfg.num_heads)
        self.f_from_g = Attention(w, cfg.num_heads)
        self.zero_g = zero_linear(w, w)
        self.zero_f = zero_linear(w, w)

    def forward(self, g, f):
        """g: (S, T3, W); f: (S, v, T2, W); both updated from pre-update values."""
        s, v, L, w = f.shape
        gn, fn = self.norm_g(g), self.norm_f(f)
        g_up = self.zero_g(self.g_from_f(gn, fn.reshape(s, v * L, w)))
        f_up = self.zero_f(self.f_from_g(fn, gn[:, None].expand(s, v, -1, w)))
        return g + g_up, f + f_up


class BoxInjectBlock(nn.Module):
    """Residual cross-attention from part features to that part's box latent,
    zero-initialized output map."""

    def __init__(self, cfg: DenoiserConfig):
        super().__init__()
        w = cfg.width
        self.box_proj = nn.Linear(cfg.geom_dim, w)
        self.norm_g = nn.LayerNorm(w)
        self.norm_b = nn.LayerNorm(w)
        self.attn = Attention(w, cfg.num_heads)
        self.zero = zero_linear(w, w)

    def forward(self, g, box_latents, return_weights=False):
        kv = self.norm_b(self.box_proj(box_latents))
        if return_weights:
            out, weights = self.attn(self.norm_g(g), kv, return_weights=True)
            return g + self.zero(out), weights
        return g + self.zero(self.attn(self.norm_g(g), kv))


class DualDenoiser(nn.Module):
    def __init__(self, cfg: DenoiserConfig):
        super().__init__()
        self.cfg = cfg
        w = cfg.width

        self.geom_in = nn.Linear(cfg.geom_dim, w)
        self.image_in = nn.Linear(cfg.image_dim, w)
        self.pos_geom = nn.Parameter(torch.randn(cfg.geom_tokens, w) * 0.02)
        self.pos_image = nn.Parameter(torch.randn(cfg.image_tokens, w) * 0.02)
        self.view_embed = nn.Parameter(torch.randn(cfg.num_views, w) * 0.02)

        self.text_embed = nn.Embedding(cfg.vocab_size, cfg.text_dim)
        self.branch_tags = nn.Parameter(torch.randn(2, cfg.text_dim) * 0.02)  # (part, global)
        self.null_caption = nn.Parameter(torch.zeros(cfg.caption_length, cfg.text_dim))
        self.null_box = nn.Parameter(torch.zeros(cfg.geom_tokens, cfg.geom_dim))
        self.cond_proj = nn.Linear(cfg.text_dim, w)

        self.t_mlp = nn.Sequential(nn.Linear(w, w), nn.GELU(), nn.Linear(w, w))

        self.geom_blocks = nn.ModuleList(GeomBlock(cfg) for _ in range(cfg.num_blocks))
        self.image_blocks = nn.ModuleList(
            ImageBlock(cfg, with_cross_part=(i in cfg.cross_part_blocks))
            for i in range(cfg.num_blocks)
        )
        self.cross_modality = nn.ModuleDict(
            {str(i): CrossModalityBlock(cfg) for i in cfg.cross_modality_after}
        )
        self.box_inject = nn.ModuleDict(
            {str(i): BoxInjectBlock(cfg) for i in cfg.box_inject_after}
        )

        # wireframe adapter: trainable copies of the first image blocks,
        # feeding the global 2D slot through zero-initialized projections
        self.control_blocks = nn.ModuleList(
            copy.deepcopy(self.image_blocks[i]) for i in range(cfg.controlnet_blocks)
        )
        self.control_proj = nn.ModuleDict(
            {str(i): zero_linear(w, w) for i in cfg.controlnet_inject_after}
        )

        self.head_norm_geom = nn.LayerNorm(w)
        self.head_geom = zero_linear(w, cfg.geom_dim)
        self.head_norm_image = nn.LayerNorm(w)
        self.head_image = zero_linear(w, cfg.image_dim)

    # -------------------------------------------------------- conditioning --

    def embed_captions(self, tokens) -> torch.Tensor:
        """Token ids (..., L) -> embeddings (..., L, text_dim)."""
        tokens = as_tensor(tokens, torch.long)
        if tokens.shape[-1] != self.cfg.caption_length:
            raise ParameterError(f"captions must have length {self.cfg.caption_length}")
        if tokens.min() < 0 or tokens.max() >= self.cfg.vocab_size:
            raise ParameterError("caption token id outside vocabulary")
        return self.text_embed(tokens)

    def global_branch_embed(self, caption_embeddings, is_global: bool) -> torch.Tensor:
        """Append the part-tag or global-tag row to a caption embedding sequence."""
        tag = self.branch_tags[1 if is_global else 0]
        emb = as_tensor(caption_embeddings, tag.dtype)
        return torch.cat([emb, tag.expand(*emb.shape[:-2], 1, -1)], dim=-2)

    def _condition_sequences(self, state: DenoiserState, drop_cond: bool):
        dtype = self.pos_geom.dtype
        if drop_cond:
            n = state.captions.shape[0]
            cap = self.null_caption[None].expand(n, -1, -1)
            cap_g = self.null_caption
        else:
            cap = self.embed_captions(state.captions)
            cap_g = self.embed_captions(state.global_caption)
        part_seq = self.global_branch_embed(cap, is_global=False)
        global_seq = self.global_branch_embed(cap_g, is_global=True)
        cond = torch.cat([part_seq, global_seq[None]], dim=0)
        return self.cond_proj(cond.to(dtype))

    # ------------------------------------------------------------- forward --

    def forward(
        self,
        state: DenoiserState,
        wire_latents=None,
        drop_cond: bool = False,
        enable_cross_modality: bool = True,
        enable_box: bool = True,
        enable_controlnet: bool = True,
    ) -> DenoisePrediction:
        cfg = self.cfg
        dtype = self.pos_geom.dtype
        if not 0 <= state.t <= cfg.t_max:
            raise ParameterError(f"timestep {state.t} outside 0..{cfg.t_max}")
        geom = as_tensor(state.geom, dtype)
        image = as_tensor(state.image, dtype)
        mask = as_tensor(state.part_mask, torch.bool)
        n = geom.shape[0]
        if geom.shape != (n, cfg.geom_tokens, cfg.geom_dim):
            raise ParameterError(f"geom latents must be (N, {cfg.geom_tokens}, {cfg.geom_dim})")
        if image.shape != (n, cfg.num_views, cfg.image_tokens, cfg.image_dim):
            raise ParameterError(
                f"image latents must be (N, {cfg.num_views}, {cfg.image_tokens}, {cfg.image_dim})"
            )
        if not bool(mask.any()):
            raise ParameterError("at least one part must be unmasked")

        x3 = torch.cat([geom, as_tensor(state.global_geom, dtype)[None]], dim=0)
        x2 = torch.cat([image, as_tensor(state.global_image, dtype)[None]], dim=0)
        mask_all = torch.cat([mask, torch.ones(1, dtype=torch.bool)])

        box = self.null_box[None].expand(n, -1, -1) if drop_cond \
            else as_tensor(state.box_latents, dtype)
        cond = self._condition_sequences(state, drop_cond)

        t_vec = self.t_mlp(timestep_embedding(state.t, cfg.width, dtype=dtype))[0]
        h3 = self.geom_in(x3) + self.pos_geom + t_vec
        h2 = self.image_in(x2) + self.pos_image[None] + self.view_embed[:, None, :] + t_vec

        use_control = enable_controlnet and wire_latents is not None and not drop_cond
        if use_control:
            wire = as_tensor(wire_latents, dtype)
            if wire.shape != (cfg.num_views, cfg.image_tokens, cfg.image_dim):
                raise ParameterError("wire latents must be (v, T2, D2)")
            hc = (self.image_in(wire) + self.pos_image[None]
                  + self.view_embed[:, None, :] + t_vec)[None]
            cond_g = cond[-1:]
            control_feats = []
            for blk in self.control_blocks:
                hc = blk(hc, torch.ones(1, dtype=torch.bool), cond_g, cross_part=False)
                control_feats.append(hc)

        for i in range(cfg.num_blocks):
            cp = i in cfg.cross_part_blocks
            h3 = self.geom_blocks[i](h3, mask_all, cond, cross_part=cp)
            h2 = self.image_blocks[i](h2, mask_all, cond, cross_part=cp)
            if use_control and i in cfg.controlnet_inject_after:
                site = cfg.controlnet_inject_after.index(i)
                upd = self.control_proj[str(i)](control_feats[site][0])
                h2 = torch.cat([h2[:-1], (h2[-1] + upd)[None]], dim=0)
            if enable_box and i in cfg.box_inject_after:
                h3 = torch.cat([self.box_inject[str(i)](h3[:-1], box), h3[-1:]], dim=0)
            if enable_cross_modality and i in cfg.cross_modality_after:
                h3, h2 = self.cross_modality[str(i)](h3, h2)

        eps3 = self.head_geom(self.head_norm_geom(h3))
        eps2 = self.head_image(self.head_norm_image(h2))
        if not (torch.isfinite(eps3).all() and torch.isfinite(eps2).all()):
            raise NumericError("non-finite denoiser output")
        return DenoisePrediction(
            eps_geom=eps3[:-1], eps_image=eps2[:-1],
            eps_global_geom=eps3[-1], eps_global_image=eps2[-1],
        )


def diffusion_loss(pred: DenoisePrediction, eps_geom, eps_image, eps_global_geom,
                   eps_global_image, part_mask, lambda_global: float = 1.0):
    """Twin epsilon-prediction MSEs averaged over unmasked parts, plus the
    global-slot terms weighted by lambda_global. Returns (total, components)."""
    mask = as_tensor(part_mask, torch.bool)
    if not bool(mask.any()):
        raise ParameterError("loss needs at least one unmasked part")
    e3 = as_tensor(eps_geom, pred.eps_geom.dtype)
    e2 = as_tensor(eps_image, pred.eps_image.dtype)
    per3 = (pred.eps_geom - e3).pow(2).flatten(1).mean(dim=1)
    per2 = (pred.eps_image - e2).pow(2).flatten(1).mean(dim=1)
    m = mask.to(per3.dtype)
    loss3 = (per3 * m).sum() / m.sum()
    loss2 = (per2 * m).sum() / m.sum()
    g3 = (pred.eps_global_geom - as_tensor(eps_global_geom, per3.dtype)).pow(2).mean()
    g2 = (pred.eps_global_image - as_tensor(eps_global_image, per2.dtype)).pow(2).mean()
    total = loss3 + loss2 + lambda_global * (g3 + g2)
    return total, {"loss_3d": loss3, "loss_2d": loss2,
                   "global_3d": g3, "global_2d": g2, "total": total}
