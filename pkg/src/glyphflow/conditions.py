"""Condition maps and their latent packing.

From a glyph canvas we derive the two control conditions the paper's
branch consumes: a canny edge map of the *masked* canvas (luminance with
non-text regions forced to 0, then edge extraction, then re-masked so no
stray edge survives outside the boxes) and a filled-box position map.
Both are encoded through the codec in single-channel mode and
concatenated along channels — canny block first, position block second —
to form the packed condition latent. The latent-resolution region mask
(cell = 1 iff its patch footprint intersects any box) rides along; it
gates control residuals and selects Eq.-3 blend cells.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from .canvas import GlyphCanvas, TextLineSpec, check_box
from .codec import LatentCodec
from .edges import canny_edges
from .errors import IndivisibleSize, ShapeMismatch
from .images import luminance


@dataclass
class ConditionPack:
    """Pixel-space condition maps plus their packed latent encoding."""

    canny: np.ndarray             # (H, W) uint8 binary
    position: np.ndarray          # (H, W) uint8 binary
    region_mask_latent: np.ndarray  # (h, w) uint8 binary
    packed_latent: np.ndarray     # (h, w, 2 * patch^2) float64


def position_mask(lines: Sequence[TextLineSpec], size: Tuple[int, int]) -> np.ndarray:
    """Union of filled line boxes as a (H, W) uint8 map."""
    mask = np.zeros(size, dtype=np.uint8)
    for spec in lines:
        check_box(spec.box, size)
        x0, y0, x1, y1 = spec.box
        mask[y0:y1, x0:x1] = 1
    return mask


def region_mask_latent(
    lines: Sequence[TextLineSpec], size: Tuple[int, int], patch: int
) -> np.ndarray:
    """Latent-resolution mask: cell (i, j) = 1 iff its patch x patch pixel
    footprint intersects any line box."""
    height, width = size
    if height % patch or width % patch:
        raise IndivisibleSize(f"size {size} not divisible by patch {patch}")
    mask = np.zeros((height // patch, width // patch), dtype=np.uint8)
    for spec in lines:
        check_box(spec.box, size)
        x0, y0, x1, y1 = spec.box
        mask[y0 // patch:-(-y1 // patch), x0 // patch:-(-x1 // patch)] = 1
    return mask


def pack_conditions(
    canny: np.ndarray,
    position: np.ndarray,
    codec: LatentCodec,
    lines: Sequence[TextLineSpec] = (),
) -> ConditionPack:
    """Encode both maps through the codec (single-channel mode) and
    concatenate along channels: canny block then position block."""
    canny = np.asarray(canny)
    position = np.asarray(position)
    if canny.shape != position.shape or canny.ndim != 2:
        raise ShapeMismatch(
            f"condition maps must share a 2-D shape, got {canny.shape} "
            f"and {position.shape}"
        )
    canny_lat = codec.encode(canny.astype(np.float64))
    pos_lat = codec.encode(position.astype(np.float64))
    packed = np.concatenate([canny_lat, pos_lat], axis=-1)
    region = region_mask_latent(lines, canny.shape, codec.patch)
    return ConditionPack(
        canny=canny.astype(np.uint8),
        position=position.astype(np.uint8),
        region_mask_latent=region,
        packed_latent=packed,
    )


def masked_luminance(canvas: GlyphCanvas) -> np.ndarray:
    """Canvas luminance with every pixel outside the line boxes forced to
    0 — the masked image that canny runs on."""
    mask = position_mask(canvas.specs, canvas.size)
    return luminance(canvas.pixels) * mask


def build_conditions(
    canvas: GlyphCanvas,
    codec: LatentCodec,
    sigma: float = 1.0,
    lo: float = 0.1,
    hi: float = 0.2,
) -> ConditionPack:
    """Full condition pipeline for one glyph canvas: masked-canvas canny
    (re-masked to the boxes), position map, packed latent, region mask."""
    specs = canvas.specs
    position = position_mask(specs, canvas.size)
    edges = canny_edges(masked_luminance(canvas), sigma=sigma, lo=lo, hi=hi)
    edges = (edges & position).astype(np.uint8)
    return pack_conditions(edges, position, codec, lines=specs)
