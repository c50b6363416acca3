"""Rectified-flow mathematics.

The process interpolates linearly between data and noise,
``z_t = (1 - t) * z0 + t * eps`` with t in [0, 1] (t=1 pure noise), the
network regresses the constant velocity ``v = eps - z0``, and data is
recovered as ``z0_hat = z_t - t * v_hat``. Sampling integrates the ODE
with explicit Euler steps down a strictly decreasing schedule from 1
to 0.

`init_blend` implements glyph-latent replication at initialization: the
start latent equals ``lambda1 * noise + lambda2 * z0_star`` inside the
text-region mask and is the untouched noise (bit-equal) everywhere else.

All functions are dtype- and backend-agnostic: they apply the same
arithmetic to numpy arrays (channels-last latents, mask broadcast over a
trailing channel axis) and torch tensors (channels-first, mask broadcast
over leading axes).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .errors import BadSteps, BadTime, ShapeMismatch


def _check_t(t: float) -> float:
    t = float(t)
    if not (0.0 <= t <= 1.0) or t != t:
        raise BadTime(f"t must lie in [0, 1], got {t}")
    return t


def _check_shapes(a, b, what: str) -> None:
    if tuple(a.shape) != tuple(b.shape):
        raise ShapeMismatch(f"{what}: shapes {tuple(a.shape)} vs {tuple(b.shape)}")


def noise_to(z0, t: float, eps):
    """Forward noising: z_t = (1 - t) * z0 + t * eps."""
    t = _check_t(t)
    _check_shapes(z0, eps, "noise_to")
    return (1.0 - t) * z0 + t * eps


def velocity_target(z0, eps):
    """Training target: v = eps - z0."""
    _check_shapes(z0, eps, "velocity_target")
    return eps - z0


def recover_x0(z_t, t: float, v_hat):
    """Data recovery: z0_hat = z_t - t * v_hat. At t=0 this is z_t."""
    t = _check_t(t)
    _check_shapes(z_t, v_hat, "recover_x0")
    return z_t - t * v_hat


def euler_step(z_t, v_hat, t: float, t_next: float):
    """One explicit Euler step: z_{t_next} = z_t + (t_next - t) * v_hat."""
    t, t_next = _check_t(t), _check_t(t_next)
    if t_next > t:
        raise BadTime(f"t_next must not exceed t, got t={t} t_next={t_next}")
    _check_shapes(z_t, v_hat, "euler_step")
    return z_t + (t_next - t) * v_hat


def timestep_schedule(steps: int) -> List[float]:
    """Uniform schedule of steps+1 times, strictly decreasing 1 -> 0."""
    if steps < 1:
        raise BadSteps(f"steps must be >= 1, got {steps}")
    return [float(t) for t in np.linspace(1.0, 0.0, steps + 1)]


@dataclass(frozen=True)
class InitBlendConfig:
    """Strength coefficients for initialization blending: inside the
    region mask z_T = lambda1 * noise + lambda2 * z0_star."""

    lambda1: float = 0.9
    lambda2: float = 0.1

    def __post_init__(self):
        if not (np.isfinite(self.lambda1) and np.isfinite(self.lambda2)):
            raise ValueError("lambda1/lambda2 must be finite")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("lambda1/lambda2 must be >= 0")


def init_blend(noise, z0_star, region_mask, cfg: Optional[InitBlendConfig] = None):
    """Blend glyph latent into the start noise inside the region mask.

    Inside cells become ``lambda1 * noise + lambda2 * z0_star``; outside
    cells are returned bit-equal to `noise` (selected, never recomputed).

    `region_mask` is a binary (h, w) map. For numpy latents (..., h, w, c)
    it broadcasts over the trailing channel axis; for torch tensors
    (..., c, h, w) it broadcasts over the leading axes.
    """
    if cfg is None:
        cfg = InitBlendConfig()
    _check_shapes(noise, z0_star, "init_blend")
    blended = cfg.lambda1 * noise + cfg.lambda2 * z0_star
    if hasattr(noise, "detach"):  # torch tensor, channels-first
        import torch

        mask = torch.as_tensor(np.asarray(region_mask), device=noise.device).bool()
        if mask.ndim == 3:  # per-item masks (B, h, w) for (B, C, h, w) latents
            mask = mask[:, None]
        if mask.shape[-2:] != noise.shape[-2:]:
            raise ShapeMismatch(
                f"mask {tuple(mask.shape)} vs latent spatial {tuple(noise.shape[-2:])}"
            )
        return torch.where(mask, blended, noise)
    mask = np.asarray(region_mask).astype(bool)
    if mask.shape != noise.shape[-3:-1]:
        raise ShapeMismatch(
            f"mask {mask.shape} vs latent spatial {noise.shape[-3:-1]}"
        )
    return np.where(mask[..., None], blended, noise)
