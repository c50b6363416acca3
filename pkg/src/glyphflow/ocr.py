"""OCR proxy: a small conv classifier over fixed-size line crops.

It plays the role of a frozen pretrained text recognizer: its penultimate
feature maps define the perceptual text loss

    L_reward = sum_lines mean_{h',w'} sum_c (m - m')^2,

and a per-segment argmax head decodes text for accuracy metrics. Crops
are luminance line-box regions, bilinear-resized to a fixed (16, 64)
input preserving aspect ratio by right-padding with background value 1.0.
The crop path is written with explicit gather/lerp arithmetic so it is
differentiable end-to-end and exactly mirrorable by a loop oracle.

Decoding is segment-argmax: the feature width w' defines w' column
segments; each segment predicts a symbol or blank; adjacent duplicates
collapse, then blanks drop. Training labels come from the known
per-character geometry of the rendering pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
from torch import nn

from .canvas import Box, PlacedLine, check_box, compose_canvas
from .errors import ConvergenceFailure, OutOfBounds, ShapeMismatch
from .model import ChannelNorm, zero_module  # noqa: F401  (shared norm)
from . import tensorio

_LUMA = (0.2126, 0.7152, 0.0722)


@dataclass(frozen=True)
class OcrConfig:
    """Alphabet (ordered), crop size, and trunk width. The classifier has
    len(alphabet)+1 classes; the last index is blank."""

    alphabet: str
    height: int = 16
    width: int = 64
    feat_channels: int = 64

    @property
    def classes(self) -> int:
        return len(self.alphabet) + 1

    @property
    def blank(self) -> int:
        return len(self.alphabet)

    @property
    def segments(self) -> int:
        return self.width // 2

    def to_dict(self) -> dict:
        return {
            "alphabet": self.alphabet,
            "height": self.height,
            "width": self.width,
            "feat_channels": self.feat_channels,
        }


@dataclass
class LineCrop:
    """One resized line region: (height, width) grayscale pixels in [0,1],
    the source box, and optionally the ground-truth text."""

    pixels: np.ndarray
    box: Box
    text: Optional[str] = None


class OcrModel(nn.Module):
    """Conv trunk to a (feat, H/4, W/2) penultimate map, then a per-column
    classifier head."""

    def __init__(self, cfg: OcrConfig):
        super().__init__()
        self.cfg = cfg
        f = cfg.feat_channels
        self.trunk = nn.ModuleList(
            [
                nn.Conv2d(1, 32, 3, padding=1),
                ChannelNorm(32),
                nn.Conv2d(32, f, 3, stride=2, padding=1),
                ChannelNorm(f),
                nn.Conv2d(f, f, 3, padding=1),
                ChannelNorm(f),
                nn.Conv2d(f, f, 3, stride=(2, 1), padding=1),
                ChannelNorm(f),
                nn.Conv2d(f, f, 3, padding=1),
            ]
        )
        self.head = nn.Conv2d(f, cfg.classes, (cfg.height // 4, 1))

    def features(self, crops: torch.Tensor) -> torch.Tensor:
        """Penultimate feature map (B, feat, H/4, W/2) of (B, 1, H, W)
        crops — the m of Eq. 1."""
        if crops.ndim != 4 or crops.shape[1] != 1:
            raise ShapeMismatch(f"expected (B, 1, H, W) crops, got {tuple(crops.shape)}")
        x = crops
        for i, layer in enumerate(self.trunk):
            x = layer(x)
            if i < len(self.trunk) - 1 and isinstance(layer, ChannelNorm):
                x = torch.nn.functional.silu(x)
        return x

    def logits(self, crops: torch.Tensor) -> torch.Tensor:
        """(B, classes, segments) per-segment classification logits."""
        return self.head(self.features(crops)).squeeze(2)

    def forward(self, crops: torch.Tensor) -> torch.Tensor:
        return self.logits(crops)


# --- cropping geometry ------------------------------------------------------

def crop_geometry(box: Box, cfg: OcrConfig) -> Tuple[int, float]:
    """Content width after aspect-preserving resize to the crop height,
    clipped to the crop width, plus the x scale factor box->crop."""
    x0, y0, x1, y1 = box
    box_h, box_w = y1 - y0, x1 - x0
    new_w = int(np.floor(box_w * cfg.height / box_h + 0.5))
    new_w = min(cfg.width, max(1, new_w))
    return new_w, new_w / box_w


def _sample_axis(n_in: int, n_out: int, device, dtype):
    """Bilinear source coordinates for resizing n_in -> n_out, sampling at
    pixel centers: src = (i + 0.5) * n_in / n_out - 0.5, clamped."""
    pos = (torch.arange(n_out, device=device, dtype=dtype) + 0.5) * (
        n_in / n_out
    ) - 0.5
    pos = pos.clamp(0.0, float(n_in - 1))
    lo = pos.floor().long()
    hi = torch.minimum(lo + 1, torch.tensor(n_in - 1, device=device))
    frac = pos - lo.to(dtype)
    return lo, hi, frac


def bilinear_resize(img: torch.Tensor, out_h: int, out_w: int) -> torch.Tensor:
    """Differentiable bilinear resize of (..., H, W) to (..., out_h, out_w)."""
    h, w = img.shape[-2:]
    y0, y1, fy = _sample_axis(h, out_h, img.device, img.dtype)
    x0, x1, fx = _sample_axis(w, out_w, img.device, img.dtype)
    top = (1 - fx) * img[..., y0, :][..., x0] + fx * img[..., y0, :][..., x1]
    bot = (1 - fx) * img[..., y1, :][..., x0] + fx * img[..., y1, :][..., x1]
    return (1 - fy)[:, None] * top + fy[:, None] * bot


def luminance_torch(image: torch.Tensor) -> torch.Tensor:
    """(..., 3, H, W) -> (..., H, W) Rec. 709 luminance."""
    r, g, b = image[..., 0, :, :], image[..., 1, :, :], image[..., 2, :, :]
    return _LUMA[0] * r + _LUMA[1] * g + _LUMA[2] * b


def crop_line_torch(image: torch.Tensor, box: Box, cfg: OcrConfig) -> torch.Tensor:
    """(3, H, W) image -> (1, height, width) crop: luminance of the box,
    aspect-preserving bilinear resize, right-padded with 1.0."""
    x0, y0, x1, y1 = box
    if image.ndim != 3 or image.shape[0] != 3:
        raise ShapeMismatch(f"expected (3, H, W) image, got {tuple(image.shape)}")
    h, w = image.shape[-2:]
    if not (0 <= x0 < x1 <= w and 0 <= y0 < y1 <= h):
        raise OutOfBounds(f"box {box} outside {h}x{w} image")
    gray = luminance_torch(image[:, y0:y1, x0:x1])
    new_w, _ = crop_geometry(box, cfg)
    resized = bilinear_resize(gray, cfg.height, new_w)
    if new_w < cfg.width:
        pad = torch.ones(
            cfg.height, cfg.width - new_w, device=image.device, dtype=image.dtype
        )
        resized = torch.cat([resized, pad], dim=1)
    return resized[None]


def crop_lines_torch(
    image: torch.Tensor, boxes: Sequence[Box], cfg: OcrConfig
) -> torch.Tensor:
    """Stack of (N, 1, height, width) crops from one (3, H, W) image."""
    return torch.stack([crop_line_torch(image, box, cfg) for box in boxes])


def crop_lines(image: np.ndarray, lines, cfg: OcrConfig) -> List[LineCrop]:
    """Spec-level wrapper over the torch crop path for (H, W, 3) numpy
    images; `lines` may be TextLineSpec-likes (with .box/.text) or boxes."""
    img = torch.from_numpy(
        np.ascontiguousarray(np.moveaxis(np.asarray(image, np.float32), -1, 0))
    )
    crops = []
    for line in lines:
        box = tuple(getattr(line, "box", line))
        check_box(box, image.shape[:2])
        pixels = crop_line_torch(img, box, cfg)[0].numpy()
        crops.append(LineCrop(pixels=pixels, box=box, text=getattr(line, "text", None)))
    return crops


# --- Eq. 1 perceptual loss --------------------------------------------------

def perceptual_loss(
    pred_image: torch.Tensor,
    gt_image: torch.Tensor,
    boxes: Sequence[Box],
    model: OcrModel,
) -> torch.Tensor:
    """Sum over lines of mean-over-(h', w') of the channel-summed squared
    feature difference between predicted and ground-truth crops."""
    if pred_image.shape != gt_image.shape:
        raise ShapeMismatch(
            f"image shapes differ: {tuple(pred_image.shape)} vs "
            f"{tuple(gt_image.shape)}"
        )
    if not boxes:
        return pred_image.new_zeros(())
    crops_pred = crop_lines_torch(pred_image, boxes, model.cfg)
    crops_gt = crop_lines_torch(gt_image, boxes, model.cfg)
    m_pred = model.features(crops_pred)
    m_gt = model.features(crops_gt)
    per_line = ((m_pred - m_gt) ** 2).sum(dim=1).mean(dim=(1, 2))
    return per_line.sum()


# --- decoding and labels ----------------------------------------------------

def collapse_segments(indices: Sequence[int], cfg: OcrConfig) -> str:
    """Adjacent duplicates collapse, then blanks drop."""
    out = []
    prev = None
    for idx in indices:
        if idx != prev and idx != cfg.blank:
            out.append(cfg.alphabet[idx])
        prev = idx
    return "".join(out)


def decode_text(crop, model: OcrModel) -> str:
    """Segment-argmax decoding of one crop (LineCrop, array, or tensor)."""
    pixels = crop.pixels if isinstance(crop, LineCrop) else crop
    x = torch.as_tensor(np.asarray(pixels), dtype=torch.float32)
    if x.ndim == 2:
        x = x[None]
    with torch.no_grad():
        logits = model.logits(x[None])[0]
    return collapse_segments(logits.argmax(dim=0).tolist(), model.cfg)


def decode_batch(crops: torch.Tensor, model: OcrModel) -> List[str]:
    with torch.no_grad():
        logits = model.logits(crops)
    return [collapse_segments(row.argmax(dim=0).tolist(), model.cfg) for row in logits]


def segment_labels(placed: PlacedLine, cfg: OcrConfig) -> np.ndarray:
    """Per-segment class labels from rendering geometry: each of the w'
    segments takes the character whose span covers at least half of it,
    else blank."""
    x0, _, x1, _ = placed.spec.box
    new_w, fx = crop_geometry(placed.spec.box, cfg)
    seg_w = cfg.width // cfg.segments
    labels = np.full(cfg.segments, cfg.blank, dtype=np.int64)
    for char, (a, b) in zip(placed.spec.text, placed.char_spans):
        ca, cb = (a - x0) * fx, (b - x0) * fx
        cls = cfg.alphabet.index(char)
        for s in range(cfg.segments):
            lo, hi = s * seg_w, (s + 1) * seg_w
            overlap = min(cb, hi) - max(ca, lo)
            if overlap >= seg_w / 2:
                labels[s] = cls
    return labels


# --- metrics ----------------------------------------------------------------

def edit_distance(a: str, b: str) -> int:
    """Levenshtein distance, iterative two-row DP."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def text_metrics(pred: str, gt: str) -> Tuple[int, float]:
    """(exact_match, normalized edit distance); ned = 0 when both empty."""
    exact = int(pred == gt)
    longest = max(len(pred), len(gt))
    ned = edit_distance(pred, gt) / longest if longest else 0.0
    return exact, ned


# --- training ---------------------------------------------------------------

@dataclass(frozen=True)
class OcrTrainConfig:
    """Budget and optimizer settings for the proxy; training stops early
    once the held-out gate is met."""

    epochs: int = 40
    batch_size: int = 64
    learning_rate: float = 2e-3
    weight_decay: float = 0.01
    holdout_fraction: float = 0.1
    accuracy_gate: float = 0.99
    seed: int = 0


def char_accuracy(preds: Sequence[str], gts: Sequence[str]) -> float:
    """1 - mean normalized edit distance."""
    neds = [text_metrics(p, g)[1] for p, g in zip(preds, gts)]
    return 1.0 - float(np.mean(neds)) if neds else 1.0


def build_training_set(
    samples,
    cfg: OcrConfig,
    fonts=None,
    tracking: int = 1,
) -> Tuple[np.ndarray, np.ndarray, List[str]]:
    """Crops, per-segment labels, and texts from annotated samples (any
    objects with `.image` (H, W, 3) and `.lines`).

    Crops come from the sample images (so the proxy sees the dataset's
    backgrounds); labels come from the rendering geometry of the
    recomposed canvas.
    """
    crops, labels, texts = [], [], []
    for sample in samples:
        canvas = compose_canvas(
            sample.lines, sample.image.shape[:2], fonts=dict(fonts or {}),
            tracking=tracking,
        )
        img = torch.from_numpy(
            np.ascontiguousarray(
                np.moveaxis(np.asarray(sample.image, np.float32), -1, 0)
            )
        )
        for placed in canvas.lines:
            crops.append(crop_line_torch(img, placed.spec.box, cfg).numpy())
            labels.append(segment_labels(placed, cfg))
            texts.append(placed.spec.text)
    return np.stack(crops), np.stack(labels), texts


def train_ocr(
    crops: np.ndarray,
    labels: np.ndarray,
    texts: Sequence[str],
    model_cfg: OcrConfig,
    cfg: OcrTrainConfig = OcrTrainConfig(),
    log=None,
    must_read: Optional[Tuple[np.ndarray, Sequence[str]]] = None,
) -> Tuple[OcrModel, Dict[str, float]]:
    """Train the proxy on (N, 1, H, W) crops with (N, segments) labels.

    Returns the trained model and a report with held-out character
    accuracy. Raises ConvergenceFailure when the accuracy gate is not met
    within the epoch budget.

    `must_read` optionally names (crops, texts) the trained instrument has
    to decode exactly before the gate opens — used to calibrate the proxy
    on the renders it will score, on top of the held-out accuracy gate.
    """
    n = len(crops)
    rng = np.random.default_rng(cfg.seed)
    order = rng.permutation(n)
    n_hold = max(1, int(n * cfg.holdout_fraction))
    hold_idx, train_idx = order[:n_hold], order[n_hold:]
    xs = torch.from_numpy(np.asarray(crops, np.float32))
    ys = torch.from_numpy(np.asarray(labels, np.int64))
    torch.manual_seed(cfg.seed)
    model = OcrModel(model_cfg)
    opt = torch.optim.AdamW(
        model.parameters(), lr=cfg.learning_rate, weight_decay=cfg.weight_decay
    )
    hold_x = xs[hold_idx]
    hold_texts = [texts[i] for i in hold_idx]
    must_x = None
    if must_read is not None:
        must_x = torch.from_numpy(np.asarray(must_read[0], np.float32))
    accuracy = 0.0
    for epoch in range(cfg.epochs):
        perm = rng.permutation(len(train_idx))
        total = 0.0
        for start in range(0, len(perm), cfg.batch_size):
            sel = train_idx[perm[start:start + cfg.batch_size]]
            logits = model.logits(xs[sel])
            loss = torch.nn.functional.cross_entropy(logits, ys[sel])
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += float(loss.detach()) * len(sel)
        model.eval()
        preds = decode_batch(hold_x, model)
        accuracy = char_accuracy(preds, hold_texts)
        exact_ok = True
        if must_x is not None:
            exact_ok = decode_batch(must_x, model) == list(must_read[1])
        model.train()
        if log is not None:
            log(
                {
                    "epoch": epoch,
                    "train_loss": total / len(train_idx),
                    "holdout_char_acc": accuracy,
                }
            )
        if accuracy >= cfg.accuracy_gate and exact_ok:
            break
    else:
        raise ConvergenceFailure(
            f"OCR held-out char accuracy {accuracy:.4f} < gate "
            f"{cfg.accuracy_gate} (or calibration set misread) after "
            f"{cfg.epochs} epochs"
        )
    model.eval()
    for p in model.parameters():
        p.requires_grad_(False)
    return model, {"holdout_char_acc": accuracy, "holdout_size": int(n_hold)}


def save_ocr(model: OcrModel, path) -> None:
    tensors = {
        name: p.detach().cpu().numpy().astype(np.float32)
        for name, p in model.state_dict().items()
    }
    tensorio.write_weights(path, tensors, model.cfg.to_dict())


def load_ocr(path) -> OcrModel:
    tensors, header = tensorio.read_weights(path)
    cfg = OcrConfig(**header["config"])
    model = OcrModel(cfg)
    model.load_state_dict(
        {name: torch.from_numpy(arr.copy()) for name, arr in tensors.items()}
    )
    model.eval()
    for p in model.parameters():
        p.requires_grad_(False)
    return model
