"""Bitmap fonts: the BFONT v1 text format, builtin faces, line rasterization.

A BFONT file is plain text::

    BFONT 1 <cell_height> <glyph_count>
    GLYPH U+<hex> <width>
    <cell_height rows of '0'/'1', each <width> chars>
    ...

All glyphs in a font share one cell height; widths vary per glyph.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np

from .errors import (
    DuplicateCodepoint,
    EmptyFont,
    EmptyText,
    MissingGlyph,
    ParseError,
)


@dataclass
class BitmapFont:
    """A fixed-cell-height set of binary glyph bitmaps keyed by character."""

    cell_height: int
    glyphs: Dict[str, np.ndarray]

    def glyph(self, char: str) -> np.ndarray:
        try:
            return self.glyphs[char]
        except KeyError:
            raise MissingGlyph(f"font has no glyph for {char!r}") from None

    @property
    def charset(self) -> str:
        return "".join(sorted(self.glyphs))


def parse_bfont(text: str) -> BitmapFont:
    """Parse BFONT v1 text into a `BitmapFont`.

    Raises
    ------
    ParseError
        Malformed header, rows, widths, or truncation.
    DuplicateCodepoint
        The same codepoint declared twice.
    EmptyFont
        Zero glyphs declared.
    """
    lines = [ln.rstrip("\r\n") for ln in text.split("\n")]
    rows = [ln for ln in lines if ln.strip() != ""]
    if not rows:
        raise ParseError("empty BFONT input")
    head = rows[0].split()
    if len(head) != 4 or head[0] != "BFONT":
        raise ParseError(f"bad BFONT header: {rows[0]!r}")
    if head[1] != "1":
        raise ParseError(f"unsupported BFONT version {head[1]!r}")
    try:
        cell_height, glyph_count = int(head[2]), int(head[3])
    except ValueError:
        raise ParseError(f"bad BFONT header: {rows[0]!r}") from None
    if cell_height < 1:
        raise ParseError(f"cell height must be >= 1, got {cell_height}")
    if glyph_count < 1:
        raise EmptyFont("font declares zero glyphs")

    glyphs: Dict[str, np.ndarray] = {}
    pos = 1
    for _ in range(glyph_count):
        if pos >= len(rows):
            raise ParseError("truncated BFONT: missing glyph record")
        decl = rows[pos].split()
        pos += 1
        if len(decl) != 3 or decl[0] != "GLYPH" or not decl[1].startswith("U+"):
            raise ParseError(f"bad glyph declaration: {rows[pos - 1]!r}")
        try:
            codepoint = int(decl[1][2:], 16)
            width = int(decl[2])
        except ValueError:
            raise ParseError(f"bad glyph declaration: {rows[pos - 1]!r}") from None
        if width < 1:
            raise ParseError(f"glyph width must be >= 1, got {width}")
        char = chr(codepoint)
        if char in glyphs:
            raise DuplicateCodepoint(f"duplicate glyph U+{codepoint:04X}")
        if pos + cell_height > len(rows):
            raise ParseError(f"truncated bitmap for U+{codepoint:04X}")
        bitmap = np.zeros((cell_height, width), dtype=np.uint8)
        for r in range(cell_height):
            row = rows[pos + r]
            if len(row) != width or set(row) - {"0", "1"}:
                raise ParseError(
                    f"bad bitmap row for U+{codepoint:04X}: {row!r}"
                )
            bitmap[r] = [c == "1" for c in row]
        pos += cell_height
        glyphs[char] = bitmap
    if pos != len(rows):
        raise ParseError("trailing content after last glyph")
    return BitmapFont(cell_height=cell_height, glyphs=glyphs)


def write_bfont(font: BitmapFont) -> str:
    """Serialize a font back to BFONT v1 text (glyphs sorted by codepoint)."""
    if not font.glyphs:
        raise EmptyFont("cannot write a font with zero glyphs")
    out = [f"BFONT 1 {font.cell_height} {len(font.glyphs)}"]
    for char in sorted(font.glyphs):
        bitmap = font.glyphs[char]
        out.append(f"GLYPH U+{ord(char):04X} {bitmap.shape[1]}")
        for row in bitmap:
            out.append("".join("1" if v else "0" for v in row))
    return "\n".join(out) + "\n"


def load_bfont(path) -> BitmapFont:
    with open(path, "r", encoding="utf-8") as f:
        return parse_bfont(f.read())


def save_bfont(path, font: BitmapFont) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(write_bfont(font))


def line_width(font: BitmapFont, text: str, scale: int, tracking: int) -> int:
    """Width in pixels of `text` rasterized at `scale` with `tracking`
    pixels between glyphs (tracking is not scaled)."""
    widths = sum(font.glyph(c).shape[1] for c in text)
    return widths * scale + tracking * (len(text) - 1)


def rasterize_line(
    font: BitmapFont, text: str, scale: int = 1, tracking: int = 1
) -> Tuple[np.ndarray, List[Tuple[int, int]]]:
    """Rasterize `text` as one horizontal line of glyphs.

    Glyphs are nearest-neighbor upscaled by the integer `scale` and placed
    left to right with `tracking` pixels between them (tracking itself is
    not scaled). Returns the (cell_height*scale, total_width) uint8 bitmap
    and a per-character list of half-open column spans (start, end)
    covering each glyph's own columns; tracking columns belong to no
    character.

    Raises
    ------
    EmptyText
        `text` is empty.
    MissingGlyph
        A character has no glyph in `font`.
    """
    if text == "":
        raise EmptyText("cannot rasterize an empty line")
    if scale < 1:
        raise ParseError(f"scale must be >= 1, got {scale}")
    if tracking < 0:
        raise ParseError(f"tracking must be >= 0, got {tracking}")
    bitmaps = [font.glyph(c) for c in text]
    total = sum(b.shape[1] for b in bitmaps) * scale + tracking * (len(bitmaps) - 1)
    line = np.zeros((font.cell_height * scale, total), dtype=np.uint8)
    spans: List[Tuple[int, int]] = []
    x = 0
    for bitmap in bitmaps:
        w = bitmap.shape[1] * scale
        if scale == 1:
            line[:, x:x + w] = bitmap
        else:
            line[:, x:x + w] = np.kron(bitmap, np.ones((scale, scale), np.uint8))
        spans.append((x, x + w))
        x += w + tracking
    return line, spans


# --- builtin faces ---------------------------------------------------------

def _build(cell_height: int, table: Dict[str, List[str]]) -> str:
    out = [f"BFONT 1 {cell_height} {len(table)}"]
    for char in sorted(table):
        rows = table[char]
        out.append(f"GLYPH U+{ord(char):04X} {len(rows[0])}")
        out.extend(rows)
    return "\n".join(out) + "\n"


_TOYLATIN = {
    "0": ["01110", "10001", "10011", "10101", "11001", "10001", "01110"],
    "1": ["00100", "01100", "00100", "00100", "00100", "00100", "01110"],
    "2": ["01110", "10001", "00001", "00010", "00100", "01000", "11111"],
    "3": ["11111", "00010", "00100", "00010", "00001", "10001", "01110"],
    "4": ["00010", "00110", "01010", "10010", "11111", "00010", "00010"],
    "5": ["11111", "10000", "11110", "00001", "00001", "10001", "01110"],
    "6": ["00110", "01000", "10000", "11110", "10001", "10001", "01110"],
    "7": ["11111", "00001", "00010", "00100", "01000", "01000", "01000"],
    "8": ["01110", "10001", "10001", "01110", "10001", "10001", "01110"],
    "9": ["01110", "10001", "10001", "01111", "00001", "00010", "01100"],
    "A": ["01110", "10001", "10001", "11111", "10001", "10001", "10001"],
    "B": ["11110", "10001", "10001", "11110", "10001", "10001", "11110"],
    "C": ["01110", "10001", "10000", "10000", "10000", "10001", "01110"],
    "D": ["11100", "10010", "10001", "10001", "10001", "10010", "11100"],
    "E": ["11111", "10000", "10000", "11110", "10000", "10000", "11111"],
    "F": ["11111", "10000", "10000", "11110", "10000", "10000", "10000"],
}

_TOYDENSE = {
    "0": ["111", "101", "101", "101", "111"],
    "1": ["010", "110", "010", "010", "111"],
    "2": ["111", "001", "111", "100", "111"],
    "3": ["111", "001", "111", "001", "111"],
    "4": ["101", "101", "111", "001", "001"],
    "5": ["111", "100", "111", "001", "111"],
    "6": ["111", "100", "111", "101", "111"],
    "7": ["111", "001", "010", "010", "010"],
    "8": ["111", "101", "111", "101", "111"],
    "9": ["111", "101", "111", "001", "111"],
}

BUILTIN_FONTS: Dict[str, str] = {
    "toylatin": _build(7, _TOYLATIN),
    "toydense": _build(5, _TOYDENSE),
}


def builtin_font(name: str) -> BitmapFont:
    """Load one of the builtin faces ('toylatin': 7x5 hex digits,
    'toydense': 5x3 decimal digits)."""
    try:
        text = BUILTIN_FONTS[name]
    except KeyError:
        raise MissingGlyph(f"no builtin font named {name!r}") from None
    return parse_bfont(text)
