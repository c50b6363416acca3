"""Synthetic annotated corpus: scene sampling, composition, dataset IO.

Scenes are 1-2 short glyph lines in dark palette colors over light
procedural backgrounds (solid, two-tone gradient, or checker). All colors
live on the k/255 grid and images are composed directly on that grid, so
a written PPM reads back byte- and value-identical.

Determinism: `sample_scene` is a pure function of (seed, cfg) with a
fixed draw order; dataset generation derives per-sample seeds from
(global seed, index), so directories are byte-identical across runs.

Texts are drawn uniformly over the alphabet except that a character never
repeats its immediate predecessor: the segment-argmax decoder collapses
adjacent duplicates, so doubled letters are undecodable by construction
(the usual CTC-style ambiguity) and the generator simply never emits
them.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .canvas import GlyphCanvas, TextLineSpec, compose_canvas
from .errors import (
    CorruptDataset,
    InvariantViolation,
    MissingGlyph,
    ParseError,
    PlacementFailure,
)
from .fonts import BitmapFont, builtin_font, line_width
from .images import read_ppm, write_ppm
from .tensorio import config_hash


def _palette(*colors):
    return tuple(tuple(c / 255.0 for c in rgb) for rgb in colors)


# Dark ink colors (luma <= 0.35) and light backgrounds (luma >= 0.55),
# all on the k/255 grid.
TEXT_COLORS = _palette(
    (0, 0, 0), (153, 0, 0), (204, 0, 0), (0, 0, 153), (0, 102, 0), (102, 0, 102)
)
BACKGROUND_COLORS = _palette(
    (255, 255, 255),
    (230, 230, 204),
    (204, 230, 255),
    (255, 230, 230),
    (230, 255, 230),
    (217, 217, 217),
)

BACKGROUND_KINDS = ("solid", "gradient", "checker")


@dataclass(frozen=True)
class BackgroundSpec:
    """Procedural background: solid color, two-tone axis gradient, or
    two-tone checker with square cells."""

    kind: str
    color1: Tuple[float, float, float]
    color2: Tuple[float, float, float]
    axis: int = 0
    cell: int = 4


@dataclass(frozen=True)
class SceneSpec:
    """Everything needed to compose one sample deterministically."""

    size: Tuple[int, int]
    background: BackgroundSpec
    lines: Tuple[TextLineSpec, ...]
    seed: int


@dataclass
class AnnotatedSample:
    """One corpus item: the composed image and its line annotations."""

    image: np.ndarray
    lines: List[TextLineSpec]
    sample_id: str


@dataclass(frozen=True)
class GeneratorConfig:
    """Scene-sampling knobs; defaults are the desk-scale toy corpus."""

    size: Tuple[int, int] = (32, 32)
    alphabet: str = "0123456789"
    font_ids: Tuple[str, ...] = ("toylatin",)
    min_len: int = 1
    max_len: int = 3
    min_lines: int = 1
    max_lines: int = 2
    max_scale: int = 2
    slack: int = 4
    tracking: int = 1
    retries: int = 200
    text_colors: Tuple[Tuple[float, float, float], ...] = TEXT_COLORS
    background_colors: Tuple[Tuple[float, float, float], ...] = BACKGROUND_COLORS
    background_kinds: Tuple[str, ...] = BACKGROUND_KINDS
    checker_cells: Tuple[int, ...] = (4, 8)

    def to_dict(self) -> dict:
        return {
            "size": list(self.size),
            "alphabet": self.alphabet,
            "font_ids": list(self.font_ids),
            "min_len": self.min_len,
            "max_len": self.max_len,
            "min_lines": self.min_lines,
            "max_lines": self.max_lines,
            "max_scale": self.max_scale,
            "slack": self.slack,
            "tracking": self.tracking,
            "retries": self.retries,
            "text_colors": [list(c) for c in self.text_colors],
            "background_colors": [list(c) for c in self.background_colors],
            "background_kinds": list(self.background_kinds),
            "checker_cells": list(self.checker_cells),
        }

    @staticmethod
    def from_dict(d: dict) -> "GeneratorConfig":
        d = dict(d)
        if "size" in d:
            d["size"] = tuple(d["size"])
        for key in ("font_ids", "background_kinds", "checker_cells"):
            if key in d:
                d[key] = tuple(d[key])
        for key in ("text_colors", "background_colors"):
            if key in d:
                d[key] = tuple(tuple(c) for c in d[key])
        return GeneratorConfig(**d)


def default_fonts(cfg: GeneratorConfig) -> Dict[str, BitmapFont]:
    return {fid: builtin_font(fid) for fid in cfg.font_ids}


def validate_config(cfg: GeneratorConfig, fonts: Optional[Dict[str, BitmapFont]] = None):
    """Check the alphabet is non-empty and fully covered by every
    configured font; raises MissingGlyph naming the offending codepoint."""
    if not cfg.alphabet:
        raise InvariantViolation("generator alphabet is empty")
    fonts = fonts or default_fonts(cfg)
    for fid in cfg.font_ids:
        font = fonts[fid]
        for ch in cfg.alphabet:
            if ch not in font.glyphs:
                raise MissingGlyph(
                    f"font {fid!r} lacks glyph U+{ord(ch):04X} ({ch!r}) "
                    "required by the alphabet"
                )
    return fonts


def _sample_text(rng: np.random.Generator, cfg: GeneratorConfig) -> str:
    length = int(rng.integers(cfg.min_len, cfg.max_len + 1))
    chars: List[str] = []
    for _ in range(length):
        ch = cfg.alphabet[int(rng.integers(len(cfg.alphabet)))]
        while chars and ch == chars[-1]:
            ch = cfg.alphabet[int(rng.integers(len(cfg.alphabet)))]
        chars.append(ch)
    return "".join(chars)


def _overlaps(box, others) -> bool:
    x0, y0, x1, y1 = box
    for ox0, oy0, ox1, oy1 in others:
        if x0 < ox1 and ox0 < x1 and y0 < oy1 and oy0 < y1:
            return True
    return False


def sample_scene(rng_seed, cfg: GeneratorConfig, fonts=None) -> SceneSpec:
    """Deterministically sample one scene from (seed, cfg).

    Draw order is fixed: line count, background (kind, colors, params),
    then per line: font, text, color, scale, box (rejected and resampled
    until non-overlapping). Raises PlacementFailure when a line cannot be
    placed within cfg.retries attempts.
    """
    fonts = validate_config(cfg, fonts)
    rng = np.random.default_rng(rng_seed)
    height, width = cfg.size
    n_lines = int(rng.integers(cfg.min_lines, cfg.max_lines + 1))
    kind = cfg.background_kinds[int(rng.integers(len(cfg.background_kinds)))]
    c1 = cfg.background_colors[int(rng.integers(len(cfg.background_colors)))]
    c2 = cfg.background_colors[int(rng.integers(len(cfg.background_colors)))]
    while kind != "solid" and c2 == c1:
        c2 = cfg.background_colors[int(rng.integers(len(cfg.background_colors)))]
    axis = int(rng.integers(2))
    cell = int(cfg.checker_cells[int(rng.integers(len(cfg.checker_cells)))])
    background = BackgroundSpec(kind=kind, color1=c1, color2=c2, axis=axis, cell=cell)

    lines: List[TextLineSpec] = []
    boxes: List[Tuple[int, int, int, int]] = []
    for _ in range(n_lines):
        font_id = cfg.font_ids[int(rng.integers(len(cfg.font_ids)))]
        font = fonts[font_id]
        text = _sample_text(rng, cfg)
        color = cfg.text_colors[int(rng.integers(len(cfg.text_colors)))]
        base_w = line_width(font, text, 1, cfg.tracking)
        s_cap = min(cfg.max_scale, height // font.cell_height, width // base_w)
        if s_cap < 1:
            raise PlacementFailure(
                f"text {text!r} cannot fit a {height}x{width} canvas"
            )
        placed = False
        for _ in range(cfg.retries):
            s = int(rng.integers(1, s_cap + 1))
            box_h = font.cell_height * s + int(rng.integers(cfg.slack + 1))
            box_w = base_w * s + int(rng.integers(cfg.slack + 1))
            box_h, box_w = min(box_h, height), min(box_w, width)
            y0 = int(rng.integers(height - box_h + 1))
            x0 = int(rng.integers(width - box_w + 1))
            box = (x0, y0, x0 + box_w, y0 + box_h)
            if not _overlaps(box, boxes):
                lines.append(
                    TextLineSpec(text=text, box=box, color=color, font_id=font_id)
                )
                boxes.append(box)
                placed = True
                break
        if not placed:
            raise PlacementFailure(
                f"could not place line {len(lines)} after {cfg.retries} retries"
            )
    seed_int = int(np.random.SeedSequence(rng_seed).generate_state(1, np.uint64)[0])
    return SceneSpec(
        size=cfg.size, background=background, lines=tuple(lines), seed=seed_int
    )


def render_background(bg: BackgroundSpec, size: Tuple[int, int]) -> np.ndarray:
    """(H, W, 3) float32 background on the k/255 grid."""
    height, width = size
    c1 = np.asarray(bg.color1, dtype=np.float64)
    c2 = np.asarray(bg.color2, dtype=np.float64)
    if bg.kind == "solid":
        img = np.broadcast_to(c1, (height, width, 3)).copy()
    elif bg.kind == "gradient":
        n = height if bg.axis == 0 else width
        t = np.arange(n, dtype=np.float64) / max(n - 1, 1)
        ramp = c1[None, :] + t[:, None] * (c2 - c1)[None, :]
        if bg.axis == 0:
            img = np.broadcast_to(ramp[:, None, :], (height, width, 3)).copy()
        else:
            img = np.broadcast_to(ramp[None, :, :], (height, width, 3)).copy()
    elif bg.kind == "checker":
        yy, xx = np.indices((height, width))
        parity = ((yy // bg.cell) + (xx // bg.cell)) % 2
        img = np.where(parity[..., None] == 0, c1, c2)
    else:
        raise InvariantViolation(f"unknown background kind {bg.kind!r}")
    return (np.rint(img * 255.0) / 255.0).astype(np.float32)


def compose_sample(
    spec: SceneSpec,
    fonts: Optional[Dict[str, BitmapFont]] = None,
    sample_id: str = "",
    tracking: int = 1,
) -> Tuple[AnnotatedSample, GlyphCanvas]:
    """Compose one scene: background first, then glyph lines. Returns the
    annotated sample plus the white-background glyph canvas (the condition
    source for the same lines)."""
    if not spec.lines:
        raise InvariantViolation("SceneSpec must contain at least one line")
    canvas = compose_canvas(spec.lines, spec.size, fonts=fonts or {}, tracking=tracking)
    image = render_background(spec.background, spec.size)
    for placed in canvas.lines:
        placed.paint(image)
    sample = AnnotatedSample(
        image=image, lines=list(spec.lines), sample_id=sample_id
    )
    return sample, canvas


def generate_samples(
    seed: int, count: int, cfg: GeneratorConfig, fonts=None
) -> Iterator[Tuple[AnnotatedSample, GlyphCanvas]]:
    """Stream (sample, glyph canvas) pairs with per-index derived seeds."""
    fonts = validate_config(cfg, fonts)
    for i in range(count):
        spec = sample_scene([seed, i], cfg, fonts)
        yield compose_sample(spec, fonts, sample_id=f"{i:06d}", tracking=cfg.tracking)


def write_dataset(
    samples: Iterable[AnnotatedSample], out_dir, config: Optional[dict] = None
) -> dict:
    """Write images/ (PPM), annotations.jsonl, manifest.json; returns the
    manifest dict."""
    img_dir = os.path.join(out_dir, "images")
    os.makedirs(img_dir, exist_ok=True)
    count = 0
    with open(os.path.join(out_dir, "annotations.jsonl"), "w", encoding="utf-8") as f:
        for sample in samples:
            rel = f"images/{sample.sample_id}.ppm"
            write_ppm(os.path.join(out_dir, rel), sample.image)
            record = {
                "sample_id": sample.sample_id,
                "image_path": rel,
                "lines": [
                    {
                        "text": ln.text,
                        "box": list(ln.box),
                        "color": [float(c) for c in ln.color],
                        "font_id": ln.font_id,
                    }
                    for ln in sample.lines
                ],
            }
            f.write(json.dumps(record) + "\n")
            count += 1
    manifest = {"count": count, "config": config}
    manifest["config_hash"] = config_hash(config) if config is not None else None
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2)
        f.write("\n")
    return manifest


def read_manifest(dataset_dir) -> dict:
    try:
        with open(os.path.join(dataset_dir, "manifest.json"), encoding="utf-8") as f:
            return json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise CorruptDataset(f"cannot read manifest: {e}") from e


def read_dataset(dataset_dir) -> Iterator[AnnotatedSample]:
    """Yield samples in manifest order, validating invariants on load."""
    manifest = read_manifest(dataset_dir)
    path = os.path.join(dataset_dir, "annotations.jsonl")
    count = 0
    try:
        f = open(path, encoding="utf-8")
    except OSError as e:
        raise CorruptDataset(f"cannot read annotations: {e}") from e
    with f:
        for lineno, raw in enumerate(f, start=1):
            try:
                record = json.loads(raw)
            except json.JSONDecodeError as e:
                raise CorruptDataset(f"bad JSON on line {lineno}: {e}") from e
            img_path = os.path.join(dataset_dir, record["image_path"])
            try:
                image = read_ppm(img_path)
            except (OSError, ParseError) as e:
                raise CorruptDataset(
                    f"missing or corrupt image {record['image_path']}"
                ) from e
            height, width = image.shape[:2]
            lines = []
            for ln in record["lines"]:
                x0, y0, x1, y1 = ln["box"]
                if not (0 <= x0 < x1 <= width and 0 <= y0 < y1 <= height):
                    raise CorruptDataset(
                        f"sample {record['sample_id']}: box {ln['box']} out of bounds"
                    )
                if not ln["text"]:
                    raise CorruptDataset(
                        f"sample {record['sample_id']}: empty text"
                    )
                lines.append(
                    TextLineSpec(
                        text=ln["text"],
                        box=(x0, y0, x1, y1),
                        color=tuple(ln["color"]),
                        font_id=ln["font_id"],
                    )
                )
            yield AnnotatedSample(
                image=image, lines=lines, sample_id=record["sample_id"]
            )
            count += 1
    if count != manifest["count"]:
        raise CorruptDataset(
            f"manifest count {manifest['count']} != {count} annotation lines"
        )


def load_dataset(dataset_dir) -> List[AnnotatedSample]:
    return list(read_dataset(dataset_dir))
