"""The denoiser: a timestep-conditioned convolutional UNet over latents
(base branch) plus a ControlNet-style control branch.

Architecture notes, all chosen to keep the network strictly local in
space (needed for the receptive-field locality property):

- Normalization is per-position over channels (`ChannelNorm`), never over
  spatial extent, so no global statistics leak information across pixels.
- The control branch is a copy of the first `control_levels` encoder
  levels. It consumes ``concat(z_t, cond_proj(cond_latent))``; its stem
  carries the base stem weights on the latent channels and a fresh conv
  init on the condition channels.
- Per-level control outputs pass through zero-initialized 1x1 projections
  (residuals are exactly zero at init — the ControlNet safety property)
  and are then gated by the nearest-neighbor-resampled region mask before
  being added to the base encoder features.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
from torch import nn

from .errors import ConfigMismatch, ShapeMismatch
from . import tensorio


@dataclass(frozen=True)
class DenoiserConfig:
    """Sizes for both branches. `widths` has one entry per level;
    `control_levels` encoder levels are copied into the control branch."""

    latent_channels: int = 48
    cond_channels: int = 32
    widths: Tuple[int, ...] = (64, 128)
    blocks_per_level: int = 2
    time_dim: int = 64
    control_levels: int = 2
    t_floor: float = 0.05

    def __post_init__(self):
        if not (1 <= self.control_levels <= len(self.widths)):
            raise ConfigMismatch(
                f"control_levels {self.control_levels} must lie in "
                f"[1, {len(self.widths)}]"
            )
        if self.time_dim % 2:
            raise ConfigMismatch(f"time_dim must be even, got {self.time_dim}")
        if not (0.0 < self.t_floor <= 1.0):
            raise ConfigMismatch(f"t_floor must be in (0, 1], got {self.t_floor}")

    @property
    def levels(self) -> int:
        return len(self.widths)

    def to_dict(self) -> dict:
        return {
            "latent_channels": self.latent_channels,
            "cond_channels": self.cond_channels,
            "widths": list(self.widths),
            "blocks_per_level": self.blocks_per_level,
            "time_dim": self.time_dim,
            "control_levels": self.control_levels,
            "t_floor": self.t_floor,
        }

    @staticmethod
    def from_dict(d: dict) -> "DenoiserConfig":
        d = dict(d)
        d["widths"] = tuple(d["widths"])
        return DenoiserConfig(**d)


def zero_module(module: nn.Module) -> nn.Module:
    """Zero all parameters of a module and return it."""
    for p in module.parameters():
        nn.init.zeros_(p)
    return module


class ChannelNorm(nn.Module):
    """LayerNorm over the channel axis at every spatial position."""

    def __init__(self, channels: int, eps: float = 1e-6):
        super().__init__()
        self.eps = eps
        self.weight = nn.Parameter(torch.ones(channels))
        self.bias = nn.Parameter(torch.zeros(channels))

    def forward(self, x):
        xhat = torch.nn.functional.layer_norm(
            x.permute(0, 2, 3, 1), self.weight.shape, self.weight, self.bias, self.eps
        )
        return xhat.permute(0, 3, 1, 2)


class TimeEmbedding(nn.Module):
    """Sinusoidal features of t in [0, 1] followed by a 2-layer MLP."""

    def __init__(self, dim: int):
        super().__init__()
        self.dim = dim
        half = dim // 2
        freqs = torch.exp(-math.log(10000.0) * torch.arange(half) / half)
        self.register_buffer("freqs", freqs, persistent=False)
        self.mlp = nn.Sequential(nn.Linear(dim, dim), nn.SiLU(), nn.Linear(dim, dim))

    def forward(self, t, batch: int, device, dtype):
        if not torch.is_tensor(t):
            t = torch.full((batch,), float(t), device=device, dtype=dtype)
        t = t.reshape(-1).to(device=device, dtype=dtype)
        if t.numel() == 1 and batch > 1:
            t = t.expand(batch)
        ang = 1000.0 * t[:, None] * self.freqs[None, :].to(dtype)
        return self.mlp(torch.cat([torch.sin(ang), torch.cos(ang)], dim=1))


class ResBlock(nn.Module):
    """norm-SiLU-conv, timestep scale/shift modulation, norm-SiLU-conv,
    residual.

    The time projection produces a per-channel (scale, shift) pair applied
    to the normalized hidden features. Multiplicative modulation lets the
    block's gain vary with t — the velocity target (eps - z0) =
    (z_t - z0)/t needs exactly such 1/t-like amplification near t=0, which
    a purely additive time bias cannot express. The second conv starts at
    zero so every block is the identity at initialization.
    """

    def __init__(self, channels: int, time_dim: int):
        super().__init__()
        self.norm1 = ChannelNorm(channels)
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1)
        self.time_proj = nn.Linear(time_dim, 2 * channels)
        self.norm2 = ChannelNorm(channels)
        self.conv2 = zero_module(nn.Conv2d(channels, channels, 3, padding=1))

    def forward(self, x, temb):
        h = self.conv1(torch.nn.functional.silu(self.norm1(x)))
        scale, shift = self.time_proj(temb)[:, :, None, None].chunk(2, dim=1)
        h = self.norm2(h) * (1.0 + scale) + shift
        h = self.conv2(torch.nn.functional.silu(h))
        return x + h


def _make_level(width: int, blocks: int, time_dim: int) -> nn.ModuleList:
    return nn.ModuleList([ResBlock(width, time_dim) for _ in range(blocks)])


@dataclass
class ControlResiduals:
    """Per-level control outputs aligned to the base encoder feature maps,
    plus the gate mask actually applied at each level."""

    residuals: List[torch.Tensor] = field(default_factory=list)
    masks: List[torch.Tensor] = field(default_factory=list)


def resample_mask_nearest(mask: torch.Tensor, size: Tuple[int, int]) -> torch.Tensor:
    """Nearest-neighbor resample of a (..., h, w) mask to `size`, by index
    mapping i_src = floor(i_dst * src / dst)."""
    h_src, w_src = mask.shape[-2:]
    h_dst, w_dst = size
    iy = (torch.arange(h_dst, device=mask.device) * h_src) // h_dst
    ix = (torch.arange(w_dst, device=mask.device) * w_src) // w_dst
    return mask[..., iy, :][..., ix]


class BaseUNet(nn.Module):
    """Velocity-predicting UNet: stem, encoder levels with stride-2
    downsamples, one mid block, nearest-upsample decoder with skip fusion.

    The head is preconditioned: the conv stack regresses the displacement
    z_t - z0 (equal to t * velocity), and the forward pass divides by
    max(t, t_floor) to emit a velocity. The displacement is a
    well-conditioned regression target — O(t) near t=0 and directly tied
    to the conditions — whereas raw velocity prediction would require the
    network itself to learn the 1/t amplification that turns an x0
    estimate into a velocity as t -> 0. With the zero-initialized head the
    output is still exactly zero at initialization.
    """

    def __init__(self, cfg: DenoiserConfig):
        super().__init__()
        self.cfg = cfg
        w = cfg.widths
        self.time = TimeEmbedding(cfg.time_dim)
        self.stem = nn.Conv2d(cfg.latent_channels, w[0], 3, padding=1)
        self.enc_levels = nn.ModuleList(
            _make_level(w[i], cfg.blocks_per_level, cfg.time_dim)
            for i in range(cfg.levels)
        )
        self.downs = nn.ModuleList(
            nn.Conv2d(w[i], w[i + 1], 3, stride=2, padding=1)
            for i in range(cfg.levels - 1)
        )
        self.mid = ResBlock(w[-1], cfg.time_dim)
        self.up_convs = nn.ModuleList(
            nn.Conv2d(w[i + 1], w[i], 3, padding=1) for i in range(cfg.levels - 1)
        )
        self.fuses = nn.ModuleList(
            nn.Conv2d(2 * w[i], w[i], 3, padding=1) for i in range(cfg.levels - 1)
        )
        self.dec_levels = nn.ModuleList(
            _make_level(w[i], cfg.blocks_per_level, cfg.time_dim)
            for i in range(cfg.levels - 1)
        )
        self.head_norm = ChannelNorm(w[0])
        self.head = zero_module(nn.Conv2d(w[0], cfg.latent_channels, 3, padding=1))

    def forward(self, z_t, t, residuals: Optional[ControlResiduals] = None):
        if z_t.ndim != 4 or z_t.shape[1] != self.cfg.latent_channels:
            raise ShapeMismatch(
                f"expected (B, {self.cfg.latent_channels}, h, w), got "
                f"{tuple(z_t.shape)}"
            )
        temb = self.time(t, z_t.shape[0], z_t.device, z_t.dtype)
        x = self.stem(z_t)
        skips = []
        for lvl in range(self.cfg.levels):
            for block in self.enc_levels[lvl]:
                x = block(x, temb)
            if residuals is not None and lvl < len(residuals.residuals):
                res = residuals.residuals[lvl]
                if res.shape != x.shape:
                    raise ShapeMismatch(
                        f"residual level {lvl}: {tuple(res.shape)} vs "
                        f"feature {tuple(x.shape)}"
                    )
                x = x + res
            skips.append(x)
            if lvl < self.cfg.levels - 1:
                x = self.downs[lvl](x)
        x = self.mid(x, temb)
        for lvl in range(self.cfg.levels - 2, -1, -1):
            x = torch.nn.functional.interpolate(x, scale_factor=2, mode="nearest")
            x = self.up_convs[lvl](x)
            x = self.fuses[lvl](torch.cat([x, skips[lvl]], dim=1))
            for block in self.dec_levels[lvl]:
                x = block(x, temb)
        displacement = self.head(torch.nn.functional.silu(self.head_norm(x)))
        if not torch.is_tensor(t):
            t = torch.full((), float(t), device=z_t.device, dtype=z_t.dtype)
        t_col = t.to(device=z_t.device, dtype=z_t.dtype).reshape(-1, 1, 1, 1)
        return displacement / torch.clamp(t_col, min=self.cfg.t_floor)


class ControlBranch(nn.Module):
    """Copy of the first `control_levels` encoder levels; emits per-level
    residuals through zero-initialized 1x1 projections."""

    def __init__(self, cfg: DenoiserConfig):
        super().__init__()
        self.cfg = cfg
        w = cfg.widths
        self.time = TimeEmbedding(cfg.time_dim)
        self.cond_proj = nn.Conv2d(cfg.cond_channels, cfg.latent_channels, 1)
        self.stem = nn.Conv2d(2 * cfg.latent_channels, w[0], 3, padding=1)
        self.enc_levels = nn.ModuleList(
            _make_level(w[i], cfg.blocks_per_level, cfg.time_dim)
            for i in range(cfg.control_levels)
        )
        self.downs = nn.ModuleList(
            nn.Conv2d(w[i], w[i + 1], 3, stride=2, padding=1)
            for i in range(cfg.control_levels - 1)
        )
        self.projs = nn.ModuleList(
            zero_module(nn.Conv2d(w[i], w[i], 1)) for i in range(cfg.control_levels)
        )

    def forward(self, z_t, t, cond_latent, region_mask=None) -> ControlResiduals:
        if cond_latent.shape[-2:] != z_t.shape[-2:]:
            raise ShapeMismatch(
                f"condition spatial {tuple(cond_latent.shape[-2:])} vs "
                f"latent spatial {tuple(z_t.shape[-2:])}"
            )
        if cond_latent.shape[1] != self.cfg.cond_channels:
            raise ShapeMismatch(
                f"expected {self.cfg.cond_channels} condition channels, got "
                f"{cond_latent.shape[1]}"
            )
        temb = self.time(t, z_t.shape[0], z_t.device, z_t.dtype)
        x = self.stem(torch.cat([z_t, self.cond_proj(cond_latent)], dim=1))
        out = ControlResiduals()
        if region_mask is not None:
            if not torch.is_tensor(region_mask):
                region_mask = torch.as_tensor(np.asarray(region_mask))
            if region_mask.ndim == 2:
                region_mask = region_mask[None, None]
            elif region_mask.ndim == 3:  # per-item masks (B, h, w)
                region_mask = region_mask[:, None]
            else:
                raise ShapeMismatch(
                    f"region mask must be (h, w) or (B, h, w), got "
                    f"{tuple(region_mask.shape)}"
                )
        for lvl in range(self.cfg.control_levels):
            for block in self.enc_levels[lvl]:
                x = block(x, temb)
            res = self.projs[lvl](x)
            if region_mask is not None:
                gate = resample_mask_nearest(region_mask, res.shape[-2:])
                gate = gate.to(device=res.device, dtype=res.dtype)
                res = res * gate
            else:
                gate = torch.ones(
                    (1, 1) + tuple(res.shape[-2:]), device=res.device, dtype=res.dtype
                )
            out.residuals.append(res)
            out.masks.append(gate)
            if lvl < self.cfg.control_levels - 1:
                x = self.downs[lvl](x)
        return out


class GlyphModel(nn.Module):
    """Base UNet plus control branch behind one forward."""

    def __init__(self, cfg: DenoiserConfig):
        super().__init__()
        self.cfg = cfg
        self.base = BaseUNet(cfg)
        self.control = ControlBranch(cfg)
        init_control_from_base(self)

    def forward(self, z_t, t, cond_latent=None, region_mask=None):
        residuals = None
        if cond_latent is not None:
            residuals = self.control(z_t, t, cond_latent, region_mask=region_mask)
        return self.base(z_t, t, residuals=residuals)


def init_control_from_base(model: GlyphModel) -> GlyphModel:
    """Copy base encoder weights into the control branch: stem weights for
    the latent input channels (the extra condition channels keep their
    fresh conv init so condition information reaches the branch from step
    one), every copied level's blocks and downsamples, and the time
    embedding; output projections are (re)zeroed — they alone guarantee
    the zero-residual neutrality property."""
    base, control, cfg = model.base, model.control, model.cfg
    with torch.no_grad():
        c = cfg.latent_channels
        control.stem.weight[:, :c] = base.stem.weight
        control.stem.bias.copy_(base.stem.bias)
        control.time.load_state_dict(base.time.state_dict())
        for lvl in range(cfg.control_levels):
            control.enc_levels[lvl].load_state_dict(
                base.enc_levels[lvl].state_dict()
            )
        for lvl in range(cfg.control_levels - 1):
            control.downs[lvl].load_state_dict(base.downs[lvl].state_dict())
        for proj in control.projs:
            zero_module(proj)
    return model


def receptive_field_radius(cfg: DenoiserConfig, from_level: int = 0) -> int:
    """Upper bound, in latent cells, on how far a perturbation injected at
    `from_level`'s encoder feature map can reach in the output.

    Walks the conv sequence from the injection point: each k=3 conv adds
    one grid step at the current feature spacing; stride-2 downsamples
    double the spacing; nearest upsamples halve it. An extra allowance of
    one cell per upsample covers grid-alignment drift.
    """
    levels, bpl = cfg.levels, cfg.blocks_per_level
    radius = 0
    jump = 2 ** from_level
    for lvl in range(from_level, levels - 1):
        radius += jump          # downsample conv (k=3, stride 2)
        jump *= 2
        radius += 2 * bpl * jump  # next level's encoder blocks
    radius += 2 * jump          # mid block
    for lvl in range(levels - 2, -1, -1):
        jump //= 2
        radius += jump          # alignment allowance for the upsample
        radius += 2 * jump      # up conv + fuse conv
        radius += 2 * bpl * jump  # decoder blocks
    radius += 1                 # head conv
    return radius


def count_parameters(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())


def save_weights(model: GlyphModel, path) -> None:
    """Write every parameter (float32) plus the config into a container."""
    tensors: Dict[str, np.ndarray] = {
        name: p.detach().cpu().numpy().astype(np.float32)
        for name, p in model.state_dict().items()
    }
    tensorio.write_weights(path, tensors, model.cfg.to_dict())


def load_weights(path, config: Optional[DenoiserConfig] = None) -> GlyphModel:
    """Rebuild a model from a container; rejects config-hash mismatches."""
    expect = config.to_dict() if config is not None else None
    tensors, header = tensorio.read_weights(path, expect_config=expect)
    cfg = DenoiserConfig.from_dict(header["config"])
    model = GlyphModel(cfg)
    state = {name: torch.from_numpy(arr.copy()) for name, arr in tensors.items()}
    model.load_state_dict(state)
    return model
