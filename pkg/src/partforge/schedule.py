"""Cosine noise schedule and the forward noising map."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .errors import ParameterError

COSINE_S = 0.008
BETA_MAX = 0.999


@dataclass(frozen=True)
class NoiseSchedule:
    """alpha_bar[t] for t = 0..steps; alpha_bar[0] == 1, strictly decreasing."""

    steps: int
    alpha_bar: np.ndarray

    def __post_init__(self):
        ab = np.asarray(self.alpha_bar, dtype=np.float64)
        object.__setattr__(self, "alpha_bar", ab)
        if ab.shape != (self.steps + 1,):
            raise ParameterError("alpha_bar must have steps+1 entries")
        if ab[0] != 1.0:
            raise ParameterError("alpha_bar[0] must be exactly 1")
        if not np.all(np.diff(ab) < 0):
            raise ParameterError("alpha_bar must be strictly decreasing")
        if not (ab[-1] > 0):
            raise ParameterError("alpha_bar must stay positive")
        if not (ab[-1] < 1e-3):
            raise ParameterError("alpha_bar at t_max must be < 1e-3 (terminal noise level)")


def build_schedule(kind: str, t_max: int) -> NoiseSchedule:
    """Cosine alpha_bar (squared-cosine ramp with small offset), clamped betas."""
    if kind != "cosine":
        raise ParameterError(f"unknown schedule kind {kind!r}")
    if t_max < 1:
        raise ParameterError("t_max must be >= 1")
    t = np.arange(t_max + 1, dtype=np.float64)
    f = np.cos((t / t_max + COSINE_S) / (1.0 + COSINE_S) * np.pi / 2.0) ** 2
    alpha_bar = f / f[0]
    # clamp per-step betas for numerical stability near t_max
    betas = 1.0 - alpha_bar[1:] / alpha_bar[:-1]
    betas = np.clip(betas, 1e-8, BETA_MAX)
    alpha_bar = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
    return NoiseSchedule(steps=t_max, alpha_bar=alpha_bar)


def add_noise(l0: torch.Tensor, t: int, eps: torch.Tensor, schedule: NoiseSchedule) -> torch.Tensor:
    """Forward noising: sqrt(ab_t) * l0 + sqrt(1 - ab_t) * eps. Identity at t=0."""
    if not 0 <= t <= schedule.steps:
        raise ParameterError(f"t={t} outside schedule range 0..{schedule.steps}")
    if eps.shape != l0.shape:
        raise ParameterError("eps must match l0 shape")
    ab = float(schedule.alpha_bar[t])
    if t == 0:
        return l0.clone()
    a = torch.tensor(np.sqrt(ab), dtype=l0.dtype)
    b = torch.tensor(np.sqrt(1.0 - ab), dtype=l0.dtype)
    return a * l0 + b * eps
