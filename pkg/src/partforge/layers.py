"""Shared neural building blocks: attention, MLP, positional embeddings.

Attention is computed explicitly (matmul + softmax) so tests can inspect
the weight rows; at toy sizes this costs nothing over fused kernels.
"""

from __future__ import annotations

import math

import numpy as np
import torch
import torch.nn as nn

from .errors import ParameterError


def scaled_dot_attention(q, k, v, num_heads: int, return_weights: bool = False):
    """Multi-head attention over (..., Lq, W) queries and (..., Lk, W) keys/values."""
    *lead, Lq, W = q.shape
    Lk = k.shape[-2]
    if W % num_heads != 0:
        raise ParameterError("width must be divisible by num_heads")
    hd = W // num_heads
    qh = q.reshape(*lead, Lq, num_heads, hd).transpose(-2, -3)
    kh = k.reshape(*lead, Lk, num_heads, hd).transpose(-2, -3)
    vh = v.reshape(*lead, Lk, num_heads, hd).transpose(-2, -3)
    attn = torch.softmax(qh @ kh.transpose(-1, -2) / math.sqrt(hd), dim=-1)
    out = (attn @ vh).transpose(-2, -3).reshape(*lead, Lq, W)
    if return_weights:
        return out, attn
    return out


class Attention(nn.Module):
    """Projected multi-head attention; optional zero-initialized output map."""

    def __init__(self, width, num_heads, kv_width=None, zero_out: bool = False):
        super().__init__()
        self.num_heads = num_heads
        self.q = nn.Linear(width, width)
        self.k = nn.Linear(kv_width or width, width)
        self.v = nn.Linear(kv_width or width, width)
        self.out = nn.Linear(width, width)
        if zero_out:
            nn.init.zeros_(self.out.weight)
            nn.init.zeros_(self.out.bias)

    def forward(self, x, kv, return_weights=False):
        res = scaled_dot_attention(self.q(x), self.k(kv), self.v(kv),
                                   self.num_heads, return_weights=return_weights)
        if return_weights:
            out, w = res
            return self.out(out), w
        return self.out(res)


class Mlp(nn.Module):
    def __init__(self, width, hidden):
        super().__init__()
        self.fc1 = nn.Linear(width, hidden)
        self.fc2 = nn.Linear(hidden, width)
        self.act = nn.GELU()

    def forward(self, x):
        return self.fc2(self.act(self.fc1(x)))


class SelfAttnBlock(nn.Module):
    """Pre-LN transformer block: self-attention + MLP."""

    def __init__(self, width, num_heads, mlp_ratio=2.0):
        super().__init__()
        self.norm1 = nn.LayerNorm(width)
        self.attn = Attention(width, num_heads)
        self.norm2 = nn.LayerNorm(width)
        self.mlp = Mlp(width, int(width * mlp_ratio))

    def forward(self, x):
        h = self.norm1(x)
        x = x + self.attn(h, h)
        return x + self.mlp(self.norm2(x))


class CrossAttnBlock(nn.Module):
    """Pre-LN cross-attention block: queries attend to a context set."""

    def __init__(self, width, num_heads, kv_width=None, mlp_ratio=2.0):
        super().__init__()
        self.norm_q = nn.LayerNorm(width)
        self.norm_kv = nn.LayerNorm(kv_width or width)
        self.attn = Attention(width, num_heads, kv_width=kv_width)
        self.norm2 = nn.LayerNorm(width)
        self.mlp = Mlp(width, int(width * mlp_ratio))

    def forward(self, x, kv):
        x = x + self.attn(self.norm_q(x), self.norm_kv(kv))
        return x + self.mlp(self.norm2(x))


class FourierEmbed(nn.Module):
    """xyz -> (xyz, sin/cos of 2^b scaled coords); absolute, not translation invariant."""

    def __init__(self, bands: int = 6):
        super().__init__()
        freqs = (2.0 ** torch.arange(bands, dtype=torch.float32)) * math.pi
        self.register_buffer("freqs", freqs, persistent=False)

    @property
    def out_dim(self):
        return 3 + 3 * 2 * len(self.freqs)

    def forward(self, p):
        ang = p.unsqueeze(-1) * self.freqs.to(p.dtype)
        emb = torch.cat([p, ang.sin().flatten(-2), ang.cos().flatten(-2)], dim=-1)
        return emb


def timestep_embedding(t, dim: int, max_period: float = 10000.0, dtype=torch.float32):
    """Sinusoidal timestep embedding; t is a scalar or 1-D tensor of ints."""
    if not torch.is_tensor(t):
        t = torch.tensor([t], dtype=torch.float64)
    t = t.reshape(-1).to(torch.float64)
    half = dim // 2
    freqs = torch.exp(-math.log(max_period) * torch.arange(half, dtype=torch.float64) / half)
    ang = t[:, None] * freqs[None, :]
    emb = torch.cat([ang.cos(), ang.sin()], dim=-1)
    if dim % 2:
        emb = torch.cat([emb, torch.zeros_like(emb[:, :1])], dim=-1)
    return emb.to(dtype)


def as_tensor(x, dtype) -> torch.Tensor:
    """Tensor/ndarray/sequence -> tensor of `dtype`, preserving autograd graphs."""
    if torch.is_tensor(x):
        return x.to(dtype)
    return torch.as_tensor(np.asarray(x)).to(dtype)


def zero_linear(in_dim, out_dim):
    lin = nn.Linear(in_dim, out_dim)
    nn.init.zeros_(lin.weight)
    nn.init.zeros_(lin.bias)
    return lin
