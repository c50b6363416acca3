"""BFONT parsing/serialization and line rasterization."""

import numpy as np
import pytest

from glyphflow.errors import (
    DuplicateCodepoint,
    EmptyFont,
    EmptyText,
    MissingGlyph,
    ParseError,
)
from glyphflow.fonts import (
    BitmapFont,
    builtin_font,
    line_width,
    parse_bfont,
    rasterize_line,
    write_bfont,
)

SINGLE_A = """\
BFONT 1 3 1
GLYPH U+0041 3
111
101
111
"""


def test_parse_single_glyph():
    # the ring grid "111"/"101"/"111" parses to exactly 8 set pixels
    font = parse_bfont(SINGLE_A)
    assert font.cell_height == 3
    assert set(font.glyphs) == {"A"}
    bitmap = font.glyph("A")
    assert bitmap.shape == (3, 3)
    assert int(bitmap.sum()) == 8
    assert bitmap[1, 1] == 0


def test_parse_blank_lines_ignored():
    text = SINGLE_A.replace("GLYPH", "\n\nGLYPH")
    assert np.array_equal(parse_bfont(text).glyph("A"), parse_bfont(SINGLE_A).glyph("A"))


def test_write_parse_roundtrip(tiny_font):
    again = parse_bfont(write_bfont(tiny_font))
    assert again.cell_height == tiny_font.cell_height
    assert set(again.glyphs) == set(tiny_font.glyphs)
    for ch in tiny_font.glyphs:
        assert np.array_equal(again.glyph(ch), tiny_font.glyph(ch))


def test_write_bfont_sorts_by_codepoint():
    font = BitmapFont(
        cell_height=1,
        glyphs={"B": np.ones((1, 1), np.uint8), "A": np.zeros((1, 2), np.uint8)},
    )
    text = write_bfont(font)
    assert text.index("U+0041") < text.index("U+0042")


def test_random_fonts_roundtrip_and_counts():
    rng = np.random.default_rng(3)
    chars = [chr(c) for c in rng.choice(np.arange(0x30, 0x17F), 64, replace=False)]
    glyphs = {}
    for ch in chars:
        w = int(rng.integers(1, 7))
        glyphs[ch] = (rng.random((4, w)) < 0.5).astype(np.uint8)
    font = BitmapFont(cell_height=4, glyphs=glyphs)
    text = write_bfont(font)
    # independent count of records in the serialized text
    lines = [ln for ln in text.split("\n") if ln.strip()]
    declared = int(lines[0].split()[3])
    assert declared == 64
    assert sum(ln.startswith("GLYPH ") for ln in lines) == 64
    back = parse_bfont(text)
    for ch in chars:
        assert np.array_equal(back.glyph(ch), glyphs[ch])


def test_header_count_mismatch_rejected():
    # declares 2 glyphs but provides 1
    text = SINGLE_A.replace("BFONT 1 3 1", "BFONT 1 3 2")
    with pytest.raises(ParseError):
        parse_bfont(text)


def test_trailing_content_rejected():
    with pytest.raises(ParseError):
        parse_bfont(SINGLE_A + "111\n")


def test_bad_header_rejected():
    with pytest.raises(ParseError):
        parse_bfont("WRONG 1 3 1\n")
    with pytest.raises(ParseError):
        parse_bfont("BFONT 2 3 1\nGLYPH U+0041 1\n1\n1\n1\n")
    with pytest.raises(ParseError):
        parse_bfont("BFONT 1 0 1\nGLYPH U+0041 1\n")


def test_zero_glyphs_rejected():
    with pytest.raises(EmptyFont):
        parse_bfont("BFONT 1 3 0\n")


def test_duplicate_codepoint_rejected():
    text = (
        "BFONT 1 1 2\n"
        "GLYPH U+0041 1\n1\n"
        "GLYPH U+0041 1\n0\n"
    )
    with pytest.raises(DuplicateCodepoint):
        parse_bfont(text)


def test_bad_bitmap_row_rejected():
    bad_width = SINGLE_A.replace("101", "10")
    with pytest.raises(ParseError):
        parse_bfont(bad_width)
    bad_chars = SINGLE_A.replace("101", "1x1")
    with pytest.raises(ParseError):
        parse_bfont(bad_chars)


def test_truncated_bitmap_rejected():
    text = "BFONT 1 3 1\nGLYPH U+0041 3\n111\n101\n"
    with pytest.raises(ParseError):
        parse_bfont(text)


def test_missing_glyph_raises():
    font = parse_bfont(SINGLE_A)
    with pytest.raises(MissingGlyph):
        font.glyph("Z")


def test_rasterize_two_glyphs(tiny_font):
    # 'A' is 3 wide (8 px), 'B' is 2 wide (4 px); tracking 1 between them
    bitmap, spans = rasterize_line(tiny_font, "AB", scale=1, tracking=1)
    assert bitmap.shape == (3, 6)
    assert spans == [(0, 3), (4, 6)]
    assert int(bitmap.sum()) == 8 + 4
    assert not bitmap[:, 3].any()  # tracking column carries no ink


def test_rasterize_aa_counts():
    # a 3x3 glyph with 7 set pixels, drawn twice with tracking 1:
    # 3x7 bitmap holding exactly 14 set pixels
    font = parse_bfont("BFONT 1 3 1\nGLYPH U+0041 3\n111\n101\n110\n")
    assert int(font.glyph("A").sum()) == 7
    bitmap, spans = rasterize_line(font, "AA", scale=1, tracking=1)
    assert bitmap.shape == (3, 7)
    assert int(bitmap.sum()) == 14
    assert spans == [(0, 3), (4, 7)]


def test_rasterize_scale_two_quadruples_ink(tiny_font):
    base, _ = rasterize_line(tiny_font, "AB", scale=1, tracking=1)
    scaled, spans = rasterize_line(tiny_font, "AB", scale=2, tracking=1)
    assert scaled.shape == (6, 11)  # widths (3+2)*2 + tracking 1
    assert int(scaled.sum()) == 4 * int(base.sum())
    assert spans == [(0, 6), (7, 11)]
    # each source pixel becomes an exact 2x2 block
    a = scaled[:, :6]
    assert np.array_equal(a[::2, ::2], base[:, :3])
    assert np.array_equal(a[1::2, 1::2], base[:, :3])


def test_rasterize_empty_text_raises(tiny_font):
    with pytest.raises(EmptyText):
        rasterize_line(tiny_font, "")


def test_rasterize_bad_scale_and_tracking(tiny_font):
    with pytest.raises(ParseError):
        rasterize_line(tiny_font, "A", scale=0)
    with pytest.raises(ParseError):
        rasterize_line(tiny_font, "A", tracking=-1)


def test_rasterize_deterministic(tiny_font):
    a, _ = rasterize_line(tiny_font, "ABA", scale=2, tracking=2)
    b, _ = rasterize_line(tiny_font, "ABA", scale=2, tracking=2)
    assert np.array_equal(a, b)


def test_line_width_formula(tiny_font):
    # tracking is not scaled
    assert line_width(tiny_font, "AB", scale=1, tracking=1) == 6
    assert line_width(tiny_font, "AB", scale=3, tracking=2) == 17
    bitmap, _ = rasterize_line(tiny_font, "AB", scale=3, tracking=2)
    assert bitmap.shape[1] == 17


def test_builtin_fonts():
    latin = builtin_font("toylatin")
    assert latin.cell_height == 7
    assert set("0123456789ABCDEF") <= set(latin.glyphs)
    assert all(g.shape == (7, 5) for g in latin.glyphs.values())
    dense = builtin_font("toydense")
    assert dense.cell_height == 5
    assert set("0123456789") == set(dense.glyphs)
    with pytest.raises(MissingGlyph):
        builtin_font("nosuchfont")
