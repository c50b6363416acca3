"""Glyph canvases: fit text lines into boxes over a uniform background.

A canvas is the render of every requested line at its box: each line is
rasterized from its font, integer-upscaled to the largest factor that fits
the box, centered, and painted in the line's color. Everything downstream
(canny, position masks, the glyph latent) derives from this render and
its per-character geometry.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import BoxOverflow, OutOfBounds
from .fonts import BitmapFont, builtin_font, line_width, rasterize_line

Box = Tuple[int, int, int, int]


@dataclass(frozen=True)
class TextLineSpec:
    """One requested line: text, half-open pixel box (x0, y0, x1, y1),
    RGB color in [0, 1], and the font to draw it with."""

    text: str
    box: Box
    color: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    font_id: str = "toylatin"


@dataclass
class PlacedLine:
    """Where a line actually landed: integer glyph scale, top-left corner
    of the rasterized bitmap, its size, per-character column spans in
    canvas x coordinates, and the scaled ink bitmap itself."""

    spec: TextLineSpec
    scale: int
    top: int
    left: int
    height: int
    width: int
    char_spans: List[Tuple[int, int]] = field(default_factory=list)
    bitmap: np.ndarray = field(default_factory=lambda: np.zeros((0, 0), np.uint8))

    def paint(self, image: np.ndarray) -> None:
        """Paint this line's ink, in its color, onto an (H, W, 3) image."""
        ink = self.bitmap.astype(bool)
        region = image[self.top:self.top + self.height,
                       self.left:self.left + self.width]
        region[ink] = np.asarray(self.spec.color, dtype=image.dtype)


@dataclass
class GlyphCanvas:
    """Composed render: float32 (H, W, 3) pixels, the uniform background
    color, per-line placement records, and a uint8 (H, W) ink mask."""

    pixels: np.ndarray
    background: Tuple[float, float, float]
    lines: List[PlacedLine]
    glyph_mask: np.ndarray

    @property
    def size(self) -> Tuple[int, int]:
        return self.pixels.shape[0], self.pixels.shape[1]

    @property
    def specs(self) -> List[TextLineSpec]:
        return [line.spec for line in self.lines]


def check_box(box: Box, size: Tuple[int, int]) -> None:
    """Validate a half-open (x0, y0, x1, y1) box against an (H, W) canvas."""
    height, width = size
    x0, y0, x1, y1 = box
    if not (0 <= x0 < x1 <= width and 0 <= y0 < y1 <= height):
        raise OutOfBounds(f"box {box} does not fit a {height}x{width} canvas")


def compose_canvas(
    lines: Sequence[TextLineSpec],
    size: Tuple[int, int],
    background: Tuple[float, float, float] = (1.0, 1.0, 1.0),
    fonts: Optional[Dict[str, BitmapFont]] = None,
    tracking: int = 1,
) -> GlyphCanvas:
    """Render `lines` onto a uniform-background (H, W) canvas.

    Each line is rasterized at the largest integer scale that fits its box
    (the inter-glyph tracking scales along with the glyphs) and centered
    inside it. Overlapping boxes paint in list order, later lines on top.

    Raises
    ------
    OutOfBounds
        A box is empty or reaches outside the canvas.
    BoxOverflow
        A line's text does not fit its box even at scale 1.
    """
    height, width = size
    if fonts is None:
        fonts = {}
    pixels = np.empty((height, width, 3), dtype=np.float32)
    pixels[:] = np.asarray(background, dtype=np.float32)
    glyph_mask = np.zeros((height, width), dtype=np.uint8)
    placed: List[PlacedLine] = []
    for spec in lines:
        check_box(spec.box, size)
        x0, y0, x1, y1 = spec.box
        font = fonts.get(spec.font_id)
        if font is None:
            font = fonts.setdefault(spec.font_id, builtin_font(spec.font_id))
        base_width = line_width(font, spec.text, 1, tracking)
        scale = min((y1 - y0) // font.cell_height, (x1 - x0) // base_width)
        if scale < 1:
            raise BoxOverflow(
                f"text {spec.text!r} ({base_width} cols) does not fit "
                f"box {spec.box}"
            )
        bitmap, spans = rasterize_line(
            font, spec.text, scale=scale, tracking=tracking * scale
        )
        h, w = bitmap.shape
        top = y0 + (y1 - y0 - h) // 2
        left = x0 + (x1 - x0 - w) // 2
        ink = bitmap.astype(bool)
        pixels[top:top + h, left:left + w][ink] = np.asarray(
            spec.color, dtype=np.float32
        )
        glyph_mask[top:top + h, left:left + w][ink] = 1
        placed.append(
            PlacedLine(
                spec=spec,
                scale=scale,
                top=top,
                left=left,
                height=h,
                width=w,
                char_spans=[(left + a, left + b) for a, b in spans],
                bitmap=bitmap,
            )
        )
    return GlyphCanvas(
        pixels=pixels, background=background, lines=placed, glyph_mask=glyph_mask
    )
