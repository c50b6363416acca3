"""Training loop: denoising + perceptual reward (L = L_denoise + lambda *
L_reward), whole-condition dropout, checkpointing, JSONL metrics.

Determinism and resume: every stochastic choice of step k (batch indices,
timesteps, noise, dropout decisions) is drawn, in a fixed order, from a
fresh generator seeded with (seed, k). A run resumed from a step-k
checkpoint therefore consumes exactly the same randomness as an
uninterrupted run, and the AdamW state restored from the checkpoint makes
the continuation bit-identical.

L_reward is computed only for samples whose conditions were not dropped
(rewarding text fidelity without the condition would train the prior to
hallucinate text) and is averaged over those contributing samples; when
every sample in a batch is dropped it is logged as 0.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch

from .codec import LatentCodec
from .canvas import compose_canvas
from .conditions import build_conditions
from .data import AnnotatedSample
from .errors import ConfigMismatch, NonFiniteLoss
from .fonts import BitmapFont
from .model import DenoiserConfig, GlyphModel, count_parameters
from .ocr import OcrConfig, OcrModel, crop_line_torch
from . import tensorio


@dataclass(frozen=True)
class TrainConfig:
    """Eq.-2 hyperparameters. Dataclass defaults are the paper's stage-1
    values; `stage2()` and `paper_scale()` give the other published
    presets, and `toy()` the desk-scale settings the acceptance experiment
    runs (small model + few steps need a larger learning rate)."""

    lambda_reward: float = 0.05
    text_drop_ratio: float = 0.3
    learning_rate: float = 2e-5
    weight_decay: float = 0.01
    batch_size: int = 16
    max_steps: int = 20000
    seed: int = 0
    log_interval: int = 1
    checkpoint_interval: int = 5000
    reward_stride: int = 1
    use_canny: bool = True
    use_position: bool = True
    gate_in_training: bool = False
    lr_schedule: str = "constant"
    warmup_steps: int = 0
    time_power: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.text_drop_ratio <= 1.0):
            raise ValueError(f"text_drop_ratio must be in [0,1], got {self.text_drop_ratio}")
        if self.lambda_reward < 0:
            raise ValueError(f"lambda_reward must be >= 0, got {self.lambda_reward}")
        if self.lr_schedule not in ("constant", "cosine"):
            raise ValueError(f"unknown lr_schedule {self.lr_schedule!r}")
        if self.warmup_steps < 0:
            raise ValueError(f"warmup_steps must be >= 0, got {self.warmup_steps}")
        if not self.time_power >= 1.0:
            raise ValueError(f"time_power must be >= 1, got {self.time_power}")

    def stage2(self) -> "TrainConfig":
        """Second-stage fine-tune overrides: stronger reward, more dropout,
        lower learning rate."""
        return dataclasses.replace(
            self, lambda_reward=0.10, text_drop_ratio=0.4, learning_rate=5e-6
        )

    @staticmethod
    def paper_scale() -> "TrainConfig":
        """The published full-scale settings (recorded, not exercised)."""
        return TrainConfig(batch_size=256, learning_rate=2e-5)

    @staticmethod
    def toy(**overrides) -> "TrainConfig":
        base = dict(
            learning_rate=1e-3,
            batch_size=16,
            max_steps=12000,
            log_interval=1,
            checkpoint_interval=4000,
            lr_schedule="cosine",
            warmup_steps=200,
        )
        base.update(overrides)
        return TrainConfig(**base)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @staticmethod
    def from_dict(d: dict) -> "TrainConfig":
        return TrainConfig(**d)


def learning_rate_at(cfg: TrainConfig, step: int) -> float:
    """The step's learning rate: linear warmup to cfg.learning_rate over
    warmup_steps, then constant or a cosine decay to zero at max_steps.
    A pure function of the step so resumed runs see identical rates."""
    if cfg.warmup_steps > 0 and step < cfg.warmup_steps:
        return cfg.learning_rate * (step + 1) / cfg.warmup_steps
    if cfg.lr_schedule == "constant":
        return cfg.learning_rate
    span = max(1, cfg.max_steps - cfg.warmup_steps)
    frac = min(1.0, (step - cfg.warmup_steps) / span)
    return cfg.learning_rate * 0.5 * (1.0 + math.cos(math.pi * frac))


@dataclass
class PreparedData:
    """Dataset tensors precomputed once: latents, packed conditions,
    region masks, target images, and per-sample line geometry."""

    z0: torch.Tensor        # (N, C, h, w) float32
    cond: torch.Tensor      # (N, 2*p^2, h, w) float32
    region: torch.Tensor    # (N, h, w) float32
    images: torch.Tensor    # (N, 3, H, W) float32
    boxes: List[List[Tuple[int, int, int, int]]]
    texts: List[List[str]]
    gt_crops: torch.Tensor  # (total_lines, 1, H_ocr, W_ocr) float32
    crop_index: np.ndarray  # (N+1,) prefix sums: sample i owns rows [i, i+1)

    def __len__(self):
        return self.z0.shape[0]


def prepare_data(
    samples: Sequence[AnnotatedSample],
    codec: LatentCodec,
    fonts: Optional[Dict[str, BitmapFont]] = None,
    tracking: int = 1,
    sigma: float = 1.0,
    lo: float = 0.1,
    hi: float = 0.2,
    ocr_cfg: Optional[OcrConfig] = None,
) -> PreparedData:
    """Encode every sample once: z0 from the stored image, the packed
    condition latent from a recomposed glyph canvas of its annotations,
    and the ground-truth line crops the reward term compares against."""
    z0s, conds, regions, images, boxes, texts = [], [], [], [], [], []
    crops: List[torch.Tensor] = []
    crop_index = [0]
    fonts = dict(fonts or {})
    ocr_cfg = ocr_cfg or OcrConfig(alphabet="")
    for sample in samples:
        size = sample.image.shape[:2]
        canvas = compose_canvas(sample.lines, size, fonts=fonts, tracking=tracking)
        pack = build_conditions(canvas, codec, sigma=sigma, lo=lo, hi=hi)
        z0s.append(np.moveaxis(codec.encode(sample.image), -1, 0))
        conds.append(np.moveaxis(pack.packed_latent, -1, 0))
        regions.append(pack.region_mask_latent)
        img_t = torch.from_numpy(
            np.ascontiguousarray(np.moveaxis(sample.image, -1, 0), np.float32)
        )
        images.append(img_t)
        boxes.append([ln.box for ln in sample.lines])
        texts.append([ln.text for ln in sample.lines])
        crops.extend(crop_line_torch(img_t, ln.box, ocr_cfg) for ln in sample.lines)
        crop_index.append(len(crops))
    return PreparedData(
        z0=torch.from_numpy(np.stack(z0s).astype(np.float32)),
        cond=torch.from_numpy(np.stack(conds).astype(np.float32)),
        region=torch.from_numpy(np.stack(regions).astype(np.float32)),
        images=torch.stack(images),
        boxes=boxes,
        texts=texts,
        gt_crops=torch.stack(crops),
        crop_index=np.asarray(crop_index),
    )


def condition_channel_slices(codec: LatentCodec) -> Dict[str, slice]:
    """Channel blocks of the packed condition latent: canny first, then
    position."""
    p2 = codec.patch * codec.patch
    return {"canny": slice(0, p2), "position": slice(p2, 2 * p2)}


@dataclass
class Batch:
    """One training step's inputs, fully determined by (seed, step)."""

    indices: np.ndarray
    t: torch.Tensor         # (B,)
    eps: torch.Tensor       # (B, C, h, w)
    dropped: np.ndarray     # (B,) bool
    z0: torch.Tensor
    cond: torch.Tensor      # conditions with dropout/ablation zeroing applied
    region: torch.Tensor
    images: torch.Tensor
    boxes: List[List[Tuple[int, int, int, int]]]
    gt_crops: torch.Tensor  # (L, 1, H_ocr, W_ocr) crops of all batch lines
    crop_owner: np.ndarray  # (L,) batch position owning each crop row
    crop_rows: np.ndarray   # (L,) dataset-level row ids of those crops


def make_batch(
    data: PreparedData, step: int, cfg: TrainConfig, codec: LatentCodec
) -> Batch:
    """Draw the step's batch; the draw order (indices, t, eps, dropout) is
    fixed so training is resume-safe."""
    rng = np.random.default_rng([cfg.seed, step])
    idx = rng.integers(0, len(data), size=cfg.batch_size)
    # Timestep density proportional to t^(time_power - 1): power 1 is the
    # uniform draw; larger powers spend more steps in the noise-dominant
    # regime where the conditions carry the only usable signal.
    t = rng.random(cfg.batch_size) ** (1.0 / cfg.time_power)
    eps = rng.standard_normal(
        (cfg.batch_size,) + tuple(data.z0.shape[1:])
    ).astype(np.float32)
    dropped = rng.random(cfg.batch_size) < cfg.text_drop_ratio
    cond = data.cond[idx].clone()
    cond[torch.from_numpy(dropped)] = 0.0
    blocks = condition_channel_slices(codec)
    if not cfg.use_canny:
        cond[:, blocks["canny"]] = 0.0
    if not cfg.use_position:
        cond[:, blocks["position"]] = 0.0
    rows = np.concatenate(
        [np.arange(data.crop_index[i], data.crop_index[i + 1]) for i in idx]
    )
    counts = [data.crop_index[i + 1] - data.crop_index[i] for i in idx]
    crop_owner = np.repeat(np.arange(len(idx)), counts)
    return Batch(
        indices=idx,
        t=torch.from_numpy(t.astype(np.float32)),
        eps=torch.from_numpy(eps),
        dropped=dropped,
        z0=data.z0[idx],
        cond=cond,
        region=data.region[idx],
        images=data.images[idx],
        boxes=[data.boxes[i] for i in idx],
        gt_crops=data.gt_crops[rows],
        crop_owner=crop_owner,
        crop_rows=rows,
    )


@dataclass
class TrainState:
    """Mutable training bundle: both branches, the frozen OCR proxy, the
    codec, optimizer, and the step counter."""

    model: GlyphModel
    ocr: Optional[OcrModel]
    codec: LatentCodec
    cfg: TrainConfig
    optimizer: torch.optim.Optimizer
    step: int = 0
    gt_features: Optional[torch.Tensor] = None  # cache of frozen-OCR features


def build_state(
    denoiser_cfg: DenoiserConfig,
    cfg: TrainConfig,
    codec: LatentCodec,
    ocr: Optional[OcrModel] = None,
) -> TrainState:
    torch.manual_seed(cfg.seed)
    model = GlyphModel(denoiser_cfg)
    opt = torch.optim.AdamW(
        model.parameters(),
        lr=cfg.learning_rate,
        weight_decay=cfg.weight_decay,
        foreach=True,
    )
    if ocr is not None:
        ocr.requires_grad_(False)  # fixed reward model; no OCR gradients
    return TrainState(model=model, ocr=ocr, codec=codec, cfg=cfg, optimizer=opt)


@torch.no_grad()
def precompute_gt_features(
    state: TrainState, data: PreparedData, chunk: int = 256
) -> None:
    """Cache the frozen OCR's features of every ground-truth line crop;
    the reward term then skips the ground-truth half of each forward."""
    if state.ocr is None:
        return
    feats = [
        state.ocr.features(data.gt_crops[i : i + chunk])
        for i in range(0, len(data.gt_crops), chunk)
    ]
    state.gt_features = torch.cat(feats)


def train_step(state: TrainState, batch: Batch) -> Dict[str, float]:
    """One Eq.-2 optimization step; returns the step's metrics."""
    cfg = state.cfg
    model = state.model
    t4 = batch.t.view(-1, 1, 1, 1)
    z_t = (1.0 - t4) * batch.z0 + t4 * batch.eps
    v_target = batch.eps - batch.z0
    region = batch.region if cfg.gate_in_training else None
    v_hat = model(z_t, batch.t, cond_latent=batch.cond, region_mask=region)
    l_denoise = ((v_hat - v_target) ** 2).mean()

    l_reward = z_t.new_zeros(())
    reward_due = cfg.lambda_reward > 0 and state.step % cfg.reward_stride == 0
    active = np.nonzero(~batch.dropped)[0]
    if reward_due and len(active) and state.ocr is not None:
        z0_hat = z_t - t4 * v_hat
        pred = state.codec.decode_torch(z0_hat)
        keep = np.isin(batch.crop_owner, active)
        owners = batch.crop_owner[keep].astype(np.int64)
        pred_crops = torch.stack(
            [
                crop_line_torch(pred[i], box, state.ocr.cfg)
                for i in active
                for box in batch.boxes[i]
            ]
        )
        if state.gt_features is not None:
            m_gt = state.gt_features[batch.crop_rows[keep]]
        else:
            with torch.no_grad():
                m_gt = state.ocr.features(batch.gt_crops[torch.from_numpy(keep)])
        m_pred = state.ocr.features(pred_crops)
        per_line = ((m_pred - m_gt) ** 2).sum(dim=1).mean(dim=(1, 2))
        per_sample = z_t.new_zeros(len(batch.t)).index_add(
            0, torch.from_numpy(owners), per_line
        )
        l_reward = per_sample[torch.from_numpy(active)].mean()

    l_total = l_denoise + cfg.lambda_reward * l_reward
    if not torch.isfinite(l_total):
        raise NonFiniteLoss(
            f"non-finite loss at step {state.step}: "
            f"denoise={float(l_denoise.detach())} reward={float(l_reward.detach())}"
        )
    state.optimizer.zero_grad()
    l_total.backward()
    grad_norm = float(
        torch.nn.utils.clip_grad_norm_(model.parameters(), float("inf"))
    )
    lr = learning_rate_at(cfg, state.step)
    for group in state.optimizer.param_groups:
        group["lr"] = lr
    state.optimizer.step()
    state.step += 1
    return {
        "step": state.step,
        "L_denoise": float(l_denoise.detach()),
        "L_reward": float(l_reward.detach()),
        "L_total": float(l_total.detach()),
        "grad_norm": grad_norm,
        "dropped": int(batch.dropped.sum()),
    }


# --- checkpoints ------------------------------------------------------------

def save_checkpoint(path, state: TrainState) -> None:
    """Model parameters plus full AdamW state in one container; the header
    carries both configs and the step counter."""
    tensors: Dict[str, np.ndarray] = {}
    for name, p in state.model.state_dict().items():
        tensors[f"model.{name}"] = p.detach().cpu().numpy().astype(np.float32)
    params = list(state.model.parameters())
    for i, p in enumerate(params):
        opt_state = state.optimizer.state.get(p, {})
        for key in ("exp_avg", "exp_avg_sq"):
            if key in opt_state:
                tensors[f"opt.{i}.{key}"] = (
                    opt_state[key].detach().cpu().numpy().astype(np.float32)
                )
        if "step" in opt_state:
            tensors[f"opt.{i}.step"] = np.asarray(
                float(opt_state["step"]), dtype=np.float32
            )
    config = {
        "denoiser": state.model.cfg.to_dict(),
        "train": state.cfg.to_dict(),
        "step": state.step,
    }
    tensorio.write_weights(path, tensors, config)


def load_checkpoint(path, codec: LatentCodec, ocr: Optional[OcrModel] = None) -> TrainState:
    tensors, header = tensorio.read_weights(path)
    denoiser_cfg = DenoiserConfig.from_dict(header["config"]["denoiser"])
    cfg = TrainConfig.from_dict(header["config"]["train"])
    state = build_state(denoiser_cfg, cfg, codec, ocr=ocr)
    model_state = {
        name[len("model."):]: torch.from_numpy(arr.copy())
        for name, arr in tensors.items()
        if name.startswith("model.")
    }
    state.model.load_state_dict(model_state)
    params = list(state.model.parameters())
    for i, p in enumerate(params):
        entry = {}
        for key in ("exp_avg", "exp_avg_sq"):
            name = f"opt.{i}.{key}"
            if name in tensors:
                entry[key] = torch.from_numpy(tensors[name].copy())
        name = f"opt.{i}.step"
        if name in tensors:
            entry["step"] = torch.tensor(float(tensors[name]))
        if entry:
            state.optimizer.state[p] = entry
    state.step = int(header["config"]["step"])
    return state


# --- the loop ---------------------------------------------------------------

def run_training(
    state: TrainState,
    data: PreparedData,
    out_dir,
    progress: Optional[Callable[[Dict[str, float]], None]] = None,
) -> List[Dict[str, float]]:
    """Run from state.step to cfg.max_steps; writes metrics.jsonl and
    periodic checkpoints under out_dir; returns the logged metrics.

    On a non-finite loss the current state is dumped to crash.ckpt before
    the error propagates.
    """
    os.makedirs(out_dir, exist_ok=True)
    torch.set_num_threads(max(1, torch.get_num_threads()))
    cfg = state.cfg
    if state.ocr is not None and cfg.lambda_reward > 0 and state.gt_features is None:
        precompute_gt_features(state, data)
    metrics_path = os.path.join(out_dir, "metrics.jsonl")
    logged: List[Dict[str, float]] = []
    mode = "a" if state.step > 0 and os.path.exists(metrics_path) else "w"
    with open(metrics_path, mode, encoding="utf-8") as f:
        while state.step < cfg.max_steps:
            batch = make_batch(data, state.step, cfg, state.codec)
            try:
                metrics = train_step(state, batch)
            except NonFiniteLoss:
                save_checkpoint(os.path.join(out_dir, "crash.ckpt"), state)
                raise
            if state.step % cfg.log_interval == 0 or state.step == cfg.max_steps:
                f.write(json.dumps(metrics) + "\n")
                logged.append(metrics)
            if progress is not None:
                progress(metrics)
            if cfg.checkpoint_interval and state.step % cfg.checkpoint_interval == 0:
                save_checkpoint(
                    os.path.join(out_dir, f"step{state.step:06d}.ckpt"), state
                )
        save_checkpoint(os.path.join(out_dir, "final.ckpt"), state)
    return logged


def codec_for_denoiser(cfg: DenoiserConfig, image_channels: int = 3) -> LatentCodec:
    """The lossless codec implied by a denoiser's latent channel count."""
    patch = int(round((cfg.latent_channels / image_channels) ** 0.5))
    codec = LatentCodec(patch=patch, image_channels=image_channels)
    if codec.latent_channels != cfg.latent_channels:
        raise ConfigMismatch(
            f"latent_channels {cfg.latent_channels} is not "
            f"{image_channels} * p^2 for any integer patch p"
        )
    return codec


def load_model(path) -> Tuple[GlyphModel, dict]:
    """Load a GlyphModel from either a plain weights container or a
    training checkpoint; returns (model in eval mode, header)."""
    tensors, header = tensorio.read_weights(path)
    config = header["config"]
    if isinstance(config, dict) and "denoiser" in config:
        model = GlyphModel(DenoiserConfig.from_dict(config["denoiser"]))
        model.load_state_dict(
            {
                name[len("model."):]: torch.from_numpy(arr.copy())
                for name, arr in tensors.items()
                if name.startswith("model.")
            }
        )
    else:
        model = GlyphModel(DenoiserConfig.from_dict(config))
        model.load_state_dict(
            {name: torch.from_numpy(arr.copy()) for name, arr in tensors.items()}
        )
    model.eval()
    return model, header


def parameter_summary(model: GlyphModel) -> Dict[str, int]:
    return {
        "base": count_parameters(model.base),
        "control": count_parameters(model.control),
        "total": count_parameters(model),
    }
