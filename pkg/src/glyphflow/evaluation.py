"""Evaluation protocol and ablation harness.

`evaluate` renders images for a set of annotated eval items (through an
injectable renderer, so oracle stubs can replace the model), reads each
annotated line back with the frozen OCR proxy, and aggregates exact-match
and character accuracy with cluster-bootstrap 95% intervals (items are the
resampling unit because lines within an item share one generated image).

`run_ablation` reproduces the three ablation studies: condition choice
(separately trained variants with condition channels zeroed), glyph-latent
initialization, and region-mask gating (inference flags toggled on shared
weights). Inference variants of one item always consume identical noise —
`sampling.draw_noise` depends only on (seed, item) — so every directional
comparison is paired.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch

from .canvas import GlyphCanvas, TextLineSpec, compose_canvas
from .codec import LatentCodec
from .data import AnnotatedSample
from .errors import InvariantViolation, ShapeMismatch
from .fonts import BitmapFont
from .model import GlyphModel
from .ocr import OcrModel, crop_lines_torch, decode_batch, text_metrics
from .sampling import SampleConfig, sample_images
from .training import TrainConfig


# --- eval set ---------------------------------------------------------------

@dataclass
class EvalItem:
    """One evaluation scene: the glyph canvas that drives conditioning,
    the ground-truth line specs, and (when available) the ground-truth
    image for oracle stubs."""

    canvas: GlyphCanvas
    lines: Tuple[TextLineSpec, ...]
    image: Optional[np.ndarray] = None


def eval_items_from_samples(
    samples: Sequence[AnnotatedSample],
    fonts: Optional[Dict[str, BitmapFont]] = None,
    tracking: int = 1,
) -> List[EvalItem]:
    """Recompose each sample's glyph canvas from its annotations."""
    items = []
    for s in samples:
        canvas = compose_canvas(
            s.lines, s.image.shape[:2], fonts=dict(fonts or {}), tracking=tracking
        )
        items.append(EvalItem(canvas=canvas, lines=tuple(s.lines), image=s.image))
    return items


# --- renderers (injectable for oracle stubs) --------------------------------

Renderer = Callable[[Sequence[EvalItem], SampleConfig], np.ndarray]


def model_renderer(model: GlyphModel, codec: LatentCodec) -> Renderer:
    def render(items: Sequence[EvalItem], scfg: SampleConfig) -> np.ndarray:
        return sample_images(model, codec, [it.canvas for it in items], scfg)

    return render


def perfect_stub(items: Sequence[EvalItem], scfg: SampleConfig) -> np.ndarray:
    """Oracle upper bound: return the ground-truth images."""
    if any(it.image is None for it in items):
        raise InvariantViolation("perfect_stub needs ground-truth images")
    return np.stack([it.image for it in items]).astype(np.float32)


def blank_stub(items: Sequence[EvalItem], scfg: SampleConfig) -> np.ndarray:
    """Oracle lower bound: blank (all-white) images."""
    shape = (len(items),) + items[0].canvas.pixels.shape
    return np.ones(shape, dtype=np.float32)


# --- bootstrap --------------------------------------------------------------

def bootstrap_ratio_ci(
    num: np.ndarray, den: np.ndarray, n_boot: int = 1000, seed: int = 0
) -> Tuple[float, float]:
    """95% percentile interval for sum(num)/sum(den) under item
    resampling (cluster bootstrap)."""
    rng = np.random.default_rng([seed, 101])
    n = len(num)
    idx = rng.integers(0, n, size=(n_boot, n))
    stats = num[idx].sum(axis=1) / np.maximum(den[idx].sum(axis=1), 1e-12)
    return float(np.percentile(stats, 2.5)), float(np.percentile(stats, 97.5))


def bootstrap_mean_ci(
    values: np.ndarray, n_boot: int = 1000, seed: int = 0
) -> Tuple[float, float]:
    """95% percentile interval for the mean under item resampling."""
    rng = np.random.default_rng([seed, 202])
    n = len(values)
    idx = rng.integers(0, n, size=(n_boot, n))
    stats = values[idx].mean(axis=1)
    return float(np.percentile(stats, 2.5)), float(np.percentile(stats, 97.5))


# --- scoring ----------------------------------------------------------------

@dataclass
class EvalReport:
    """Aggregate text metrics plus per-item arrays for paired analyses."""

    n_items: int
    n_lines: int
    sentence_acc: float
    char_acc: float
    sentence_ci: Tuple[float, float]
    char_ci: Tuple[float, float]
    breakdown: Dict[str, Dict[str, float]]
    lines: List[dict] = field(default_factory=list)
    item_exact: np.ndarray = field(default_factory=lambda: np.zeros(0))
    item_char: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def to_dict(self) -> dict:
        return {
            "n_items": self.n_items,
            "n_lines": self.n_lines,
            "sentence_acc": self.sentence_acc,
            "char_acc": self.char_acc,
            "sentence_ci": list(self.sentence_ci),
            "char_ci": list(self.char_ci),
            "breakdown": self.breakdown,
            "lines": self.lines,
        }


def read_lines(
    images: np.ndarray, items: Sequence[EvalItem], ocr: OcrModel
) -> List[List[str]]:
    """Decode every annotated line of every rendered image."""
    preds: List[List[str]] = []
    for img, item in zip(images, items):
        tensor = torch.from_numpy(
            np.ascontiguousarray(np.moveaxis(img.astype(np.float32), -1, 0))
        )
        crops = crop_lines_torch(tensor, [ln.box for ln in item.lines], ocr.cfg)
        preds.append(decode_batch(crops, ocr))
    return preds


def score_images(
    images: np.ndarray,
    items: Sequence[EvalItem],
    ocr: OcrModel,
    n_boot: int = 1000,
    boot_seed: int = 0,
) -> EvalReport:
    """OCR-read every line, score against ground truth, and aggregate.

    sentence_acc is the exact-match rate over lines; char_acc is
    1 - mean NED over lines. Bootstrap intervals resample items.
    """
    if len(images) != len(items):
        raise ShapeMismatch(f"{len(images)} images for {len(items)} items")
    preds = read_lines(images, items, ocr)
    per_line: List[dict] = []
    exact_sum = np.zeros(len(items))
    ned_sum = np.zeros(len(items))
    count = np.zeros(len(items))
    by_variant: Dict[str, List[Tuple[int, float]]] = {}
    for i, (item, item_preds) in enumerate(zip(items, preds)):
        for ln, pred in zip(item.lines, item_preds):
            exact, ned = text_metrics(pred, ln.text)
            per_line.append(
                {"item": i, "text": ln.text, "pred": pred, "exact": exact, "ned": ned}
            )
            exact_sum[i] += exact
            ned_sum[i] += ned
            count[i] += 1
            by_variant.setdefault(f"{len(item.lines)}-line", []).append((exact, ned))
    total = count.sum()
    sentence_acc = float(exact_sum.sum() / total)
    char_acc = float(1.0 - ned_sum.sum() / total)
    breakdown = {
        key: {
            "sentence_acc": float(np.mean([e for e, _ in vals])),
            "char_acc": float(1.0 - np.mean([n for _, n in vals])),
            "n_lines": len(vals),
        }
        for key, vals in sorted(by_variant.items())
    }
    safe = np.maximum(count, 1)
    return EvalReport(
        n_items=len(items),
        n_lines=int(total),
        sentence_acc=sentence_acc,
        char_acc=char_acc,
        sentence_ci=bootstrap_ratio_ci(exact_sum, count, n_boot, boot_seed),
        char_ci=bootstrap_ratio_ci(count - ned_sum, count, n_boot, boot_seed),
        breakdown=breakdown,
        lines=per_line,
        item_exact=exact_sum / safe,
        item_char=1.0 - ned_sum / safe,
    )


def evaluate(
    renderer: Renderer,
    items: Sequence[EvalItem],
    scfg: SampleConfig,
    ocr: OcrModel,
    n_boot: int = 1000,
) -> EvalReport:
    """Render the eval set and score it; deterministic given scfg.seed."""
    images = renderer(items, scfg)
    return score_images(images, items, ocr, n_boot=n_boot, boot_seed=scfg.seed)


# --- background statistics --------------------------------------------------

def outside_mask(size: Tuple[int, int], lines: Sequence[TextLineSpec]) -> np.ndarray:
    """Boolean (H, W) mask of pixels outside every text box."""
    mask = np.ones(size, dtype=bool)
    for ln in lines:
        x0, y0, x1, y1 = ln.box
        mask[y0:y1, x0:x1] = False
    return mask


def background_deviation(
    images: np.ndarray, baseline: np.ndarray, items: Sequence[EvalItem]
) -> np.ndarray:
    """Per-item mean |image - baseline| over non-text pixels; the
    baseline is the unconditional sample grown from the same noise."""
    devs = np.zeros(len(items))
    for i, item in enumerate(items):
        mask = outside_mask(images[i].shape[:2], item.lines)
        if not mask.any():
            continue
        devs[i] = float(np.abs(images[i] - baseline[i])[mask].mean())
    return devs


# --- color control ----------------------------------------------------------

RED_HUE = 0.0


def hue_chroma(pixels: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Hue (in turns, [0,1)) and chroma of (..., 3) RGB pixels; gray
    pixels get chroma 0 and an arbitrary hue of 0."""
    rgb = np.asarray(pixels, dtype=np.float64)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    v = rgb.max(axis=-1)
    c = v - rgb.min(axis=-1)
    safe = np.where(c > 0, c, 1.0)
    hp = np.select(
        [v == r, v == g],
        [((g - b) / safe) % 6.0, (b - r) / safe + 2.0],
        default=(r - g) / safe + 4.0,
    )
    hue = np.where(c > 0, hp / 6.0, 0.0)
    return hue, c


def circular_hue_distance(a: float, b: float) -> float:
    """Distance on the hue circle, in turns (max 0.5)."""
    d = abs((a - b) % 1.0)
    return float(min(d, 1.0 - d))


def mean_text_hue(images: np.ndarray, items: Sequence[EvalItem]) -> Tuple[float, float]:
    """Chroma-weighted circular mean hue of all in-box pixels, pooled
    over items; returns (hue in turns, total chroma weight)."""
    sin_sum, cos_sum, weight = 0.0, 0.0, 0.0
    for img, item in zip(images, items):
        inside = ~outside_mask(img.shape[:2], item.lines)
        if not inside.any():
            continue
        hue, chroma = hue_chroma(img[inside])
        ang = 2.0 * np.pi * hue
        sin_sum += float((chroma * np.sin(ang)).sum())
        cos_sum += float((chroma * np.cos(ang)).sum())
        weight += float(chroma.sum())
    if weight == 0.0:
        return 0.0, 0.0
    return float((np.arctan2(sin_sum, cos_sum) / (2.0 * np.pi)) % 1.0), weight


def color_control_report(
    model: GlyphModel,
    codec: LatentCodec,
    items: Sequence[EvalItem],
    scfg: SampleConfig,
    target_hue: float = RED_HUE,
) -> dict:
    """Compare text-region hue with and without glyph-latent init on the
    same items, noise, and conditions; the canvases must carry the target
    ink color (red by default)."""
    render = model_renderer(model, codec)
    with_init = render(items, dataclasses.replace(scfg, use_glyph_init=True))
    without = render(items, dataclasses.replace(scfg, use_glyph_init=False))
    hue_init, w_init = mean_text_hue(with_init, items)
    hue_noinit, w_noinit = mean_text_hue(without, items)
    d_init_target = circular_hue_distance(hue_init, target_hue)
    d_init_noinit = circular_hue_distance(hue_init, hue_noinit)
    d_noinit_target = circular_hue_distance(hue_noinit, target_hue)
    return {
        "n_items": len(items),
        "target_hue": target_hue,
        "hue_with_init": hue_init,
        "hue_no_init": hue_noinit,
        "chroma_with_init": w_init,
        "chroma_no_init": w_noinit,
        "dist_init_to_target": d_init_target,
        "dist_init_to_noinit": d_init_noinit,
        "dist_noinit_to_target": d_noinit_target,
        "closer_to_target_than_to_noinit": bool(d_init_target < d_init_noinit),
        "init_closer_to_target_than_noinit": bool(d_init_target < d_noinit_target),
    }


# --- ablation harness -------------------------------------------------------

VARIANTS = (
    "canny_only",
    "position_only",
    "canny_and_position",
    "no_glyph_init",
    "with_glyph_init",
    "no_region_mask",
    "with_region_mask",
)

FAMILIES: Dict[str, Tuple[str, ...]] = {
    "conditions": ("canny_only", "position_only", "canny_and_position"),
    "glyph_init": ("no_glyph_init", "with_glyph_init"),
    "region_mask": ("no_region_mask", "with_region_mask"),
}


@dataclass(frozen=True)
class AblationSpec:
    """A set of single-factor variants to compare on one eval set."""

    variants: Tuple[str, ...]
    eval_count: int = 200
    seed: int = 0

    def __post_init__(self):
        for v in self.variants:
            if v not in VARIANTS:
                raise InvariantViolation(f"unknown ablation variant {v!r}")
        if len(set(self.variants)) != len(self.variants):
            raise InvariantViolation("duplicate ablation variants")

    @property
    def family(self) -> str:
        for name, members in FAMILIES.items():
            if set(self.variants) <= set(members):
                return name
        raise InvariantViolation(
            f"variants {self.variants} mix ablation families"
        )

    @staticmethod
    def for_family(name: str, eval_count: int = 200, seed: int = 0) -> "AblationSpec":
        if name not in FAMILIES:
            raise InvariantViolation(
                f"unknown ablation family {name!r}; pick from {sorted(FAMILIES)}"
            )
        return AblationSpec(FAMILIES[name], eval_count=eval_count, seed=seed)


def variant_sample_config(variant: str, base: SampleConfig) -> SampleConfig:
    """Each variant toggles exactly one inference factor off the full
    method; baseline-equivalent variants return the base config."""
    deltas = {
        "canny_only": {"use_position": False},
        "position_only": {"use_canny": False},
        "canny_and_position": {},
        "no_glyph_init": {"use_glyph_init": False},
        "with_glyph_init": {},
        "no_region_mask": {"use_region_mask": False},
        "with_region_mask": {},
    }
    return dataclasses.replace(base, **deltas[variant])


def variant_train_config(variant: str, base: TrainConfig) -> TrainConfig:
    """Condition-choice variants retrain with the matching channel block
    zeroed throughout training."""
    deltas = {
        "canny_only": {"use_position": False},
        "position_only": {"use_canny": False},
        "canny_and_position": {},
    }
    if variant not in deltas:
        raise InvariantViolation(
            f"variant {variant!r} is not a condition-choice variant"
        )
    return dataclasses.replace(base, **deltas[variant])


@dataclass
class AblationResult:
    family: str
    rows: List[dict]
    comparisons: List[dict]

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "rows": self.rows,
            "comparisons": self.comparisons,
        }


def _paired_comparison(
    claim: str, hi_vals: np.ndarray, lo_vals: np.ndarray, seed: int
) -> dict:
    """Bootstrap test of the directional claim mean(hi) >= mean(lo) on
    paired per-item values; the claim stands unless the 95% interval of
    the paired difference lies entirely below zero."""
    diff = hi_vals - lo_vals
    ci = bootstrap_mean_ci(diff, seed=seed)
    return {
        "claim": claim,
        "mean_diff": float(diff.mean()),
        "ci": list(ci),
        "holds": bool(ci[1] >= 0.0),
        "point_estimate_holds": bool(diff.mean() >= 0.0),
    }


def run_ablation(
    spec: AblationSpec,
    models: Dict[str, GlyphModel],
    items: Sequence[EvalItem],
    scfg: SampleConfig,
    ocr: OcrModel,
    codec: LatentCodec,
    n_boot: int = 1000,
) -> AblationResult:
    """Evaluate every variant in `spec` and run the family's directional
    comparison.

    `models` maps each variant to its weights: condition-choice variants
    use their own training runs, inference variants share one model (pass
    the same object under every name). Noise per eval item is identical
    across variants by construction.
    """
    items = list(items)[: spec.eval_count]
    rows: List[dict] = []
    reports: Dict[str, EvalReport] = {}
    images: Dict[str, np.ndarray] = {}
    for variant in spec.variants:
        if variant not in models:
            raise InvariantViolation(f"no weights supplied for variant {variant!r}")
        vcfg = variant_sample_config(variant, scfg)
        imgs = sample_images(models[variant], codec, [it.canvas for it in items], vcfg)
        report = score_images(imgs, items, ocr, n_boot=n_boot, boot_seed=scfg.seed)
        reports[variant] = report
        images[variant] = imgs
        rows.append(
            {
                "variant": variant,
                "sentence_acc": report.sentence_acc,
                "char_acc": report.char_acc,
                "char_ci": list(report.char_ci),
                "n_lines": report.n_lines,
            }
        )

    comparisons: List[dict] = []
    have = set(spec.variants)
    if {"canny_and_position", "canny_only"} <= have:
        comparisons.append(
            _paired_comparison(
                "char_acc(canny_and_position) >= char_acc(canny_only)",
                reports["canny_and_position"].item_char,
                reports["canny_only"].item_char,
                spec.seed,
            )
        )
    if {"canny_only", "position_only"} <= have:
        comparisons.append(
            _paired_comparison(
                "char_acc(canny_only) >= char_acc(position_only)",
                reports["canny_only"].item_char,
                reports["position_only"].item_char,
                spec.seed,
            )
        )
    if {"with_glyph_init", "no_glyph_init"} <= have:
        comparisons.append(
            _paired_comparison(
                "char_acc(with_glyph_init) >= char_acc(no_glyph_init)",
                reports["with_glyph_init"].item_char,
                reports["no_glyph_init"].item_char,
                spec.seed,
            )
        )
    if {"with_region_mask", "no_region_mask"} <= have:
        model = models["with_region_mask"]
        baseline = sample_images(
            model, codec, [it.canvas for it in items], scfg.unconditional()
        )
        dev_with = background_deviation(images["with_region_mask"], baseline, items)
        dev_without = background_deviation(images["no_region_mask"], baseline, items)
        comp = _paired_comparison(
            "bg_deviation(no_region_mask) >= bg_deviation(with_region_mask)",
            dev_without,
            dev_with,
            spec.seed,
        )
        comparisons.append(comp)
        for row in rows:
            devs = dev_with if row["variant"] == "with_region_mask" else dev_without
            if row["variant"] in ("with_region_mask", "no_region_mask"):
                row["bg_deviation"] = float(devs.mean())
                row["bg_deviation_ci"] = list(bootstrap_mean_ci(devs, seed=spec.seed))
    return AblationResult(family=spec.family, rows=rows, comparisons=comparisons)


def render_table(result: AblationResult) -> str:
    """Plain-text comparison table, one row per variant."""
    cols = ["variant", "sentence_acc", "char_acc"]
    extra = [k for k in ("bg_deviation",) if any(k in r for r in result.rows)]
    cols += extra
    widths = {c: max(len(c), 18) for c in cols}
    lines = ["  ".join(c.ljust(widths[c]) for c in cols)]
    lines.append("  ".join("-" * widths[c] for c in cols))
    for row in result.rows:
        cells = []
        for c in cols:
            v = row.get(c, "")
            cells.append(
                (f"{v:.4f}" if isinstance(v, float) else str(v)).ljust(widths[c])
            )
        lines.append("  ".join(cells))
    for comp in result.comparisons:
        status = "holds" if comp["holds"] else "NEGATIVE RESULT"
        lines.append(
            f"{comp['claim']}: diff={comp['mean_diff']:+.4f} "
            f"ci=[{comp['ci'][0]:+.4f}, {comp['ci'][1]:+.4f}] -> {status}"
        )
    return "\n".join(lines)


def write_report(path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
