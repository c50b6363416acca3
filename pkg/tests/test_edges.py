"""Canny pipeline: every stage pixel-exact against the scalar oracles."""

import math

import numpy as np
import pytest

from glyphflow.canvas import TextLineSpec, compose_canvas
from glyphflow.edges import (
    blur,
    canny_edges,
    gaussian_kernel,
    hysteresis,
    nonmax_suppress,
    sobel,
)
from glyphflow.errors import BadThresholds, ShapeMismatch
from glyphflow.images import luminance

from oracles import (
    oracle_blur,
    oracle_canny,
    oracle_gaussian_taps,
    oracle_hysteresis,
    oracle_nms,
    oracle_sobel,
)


def chebyshev_dilate(mask: np.ndarray, radius: int) -> np.ndarray:
    """Grow a boolean mask by `radius` pixels in the Chebyshev metric."""
    out = mask.astype(bool).copy()
    for _ in range(radius):
        grown = out.copy()
        grown[1:, :] |= out[:-1, :]
        grown[:-1, :] |= out[1:, :]
        grown[:, 1:] |= out[:, :-1]
        grown[:, :-1] |= out[:, 1:]
        grown[1:, 1:] |= out[:-1, :-1]
        grown[1:, :-1] |= out[:-1, 1:]
        grown[:-1, 1:] |= out[1:, :-1]
        grown[:-1, :-1] |= out[1:, 1:]
        out = grown
    return out


def test_gaussian_kernel_matches_oracle():
    for sigma in (0.4, 1.0, 1.5, 2.3):
        taps = gaussian_kernel(sigma)
        assert np.array_equal(taps, oracle_gaussian_taps(sigma))
        assert taps.dtype == np.float64
        assert math.isclose(float(taps.sum()), 1.0, rel_tol=0, abs_tol=1e-15)


def test_gaussian_kernel_radius_rule():
    # radius = max(1, floor(3 sigma)): sigma 1.0 -> 3, sigma 0.2 -> 1.
    assert len(gaussian_kernel(1.0)) == 7
    assert len(gaussian_kernel(0.2)) == 3
    assert len(gaussian_kernel(1.4)) == 9


def test_gaussian_kernel_rejects_bad_sigma():
    with pytest.raises(BadThresholds):
        gaussian_kernel(0.0)
    with pytest.raises(BadThresholds):
        gaussian_kernel(-1.0)


def test_blur_matches_oracle_exactly():
    rng = np.random.default_rng(7)
    for sigma in (0.5, 1.0):
        img = rng.random((12, 9))
        assert np.array_equal(blur(img, sigma), oracle_blur(img, sigma))


def test_blur_preserves_constants():
    img = np.full((10, 10), 0.37)
    out = blur(img, 1.0)
    assert np.allclose(out, 0.37, atol=1e-12)


def test_blur_rejects_tiny_images():
    with pytest.raises(ShapeMismatch):
        blur(np.zeros((2, 8)), 1.0)  # radius 3 needs >= 4 rows
    with pytest.raises(ShapeMismatch):
        blur(np.zeros((8,)), 1.0)


def test_sobel_matches_oracle_exactly():
    rng = np.random.default_rng(8)
    img = rng.random((11, 13))
    gx, gy = sobel(img)
    ox, oy = oracle_sobel(img)
    assert np.array_equal(gx, ox)
    assert np.array_equal(gy, oy)


def test_sobel_on_ramp():
    # f(x, y) = 0.1 x: interior gx = 8 * 0.1, gy = 0.
    x = np.arange(10, dtype=np.float64)
    img = np.tile(0.1 * x, (8, 1))
    gx, gy = sobel(img)
    assert np.allclose(gx[1:-1, 1:-1], 0.8, atol=1e-12)
    assert np.allclose(gy, 0.0, atol=1e-12)


def test_nms_matches_oracle_exactly():
    rng = np.random.default_rng(9)
    for _ in range(5):
        gx = rng.standard_normal((14, 14))
        gy = rng.standard_normal((14, 14))
        mag = np.hypot(gx, gy)
        assert np.array_equal(nonmax_suppress(mag, gx, gy), oracle_nms(mag, gx, gy))


def test_nms_zeroes_border():
    rng = np.random.default_rng(10)
    gx = rng.standard_normal((9, 9))
    gy = rng.standard_normal((9, 9))
    out = nonmax_suppress(np.hypot(gx, gy), gx, gy)
    assert np.all(out[0, :] == 0) and np.all(out[-1, :] == 0)
    assert np.all(out[:, 0] == 0) and np.all(out[:, -1] == 0)


def test_hysteresis_links_weak_to_strong():
    mag = np.array([[0.05, 0.15, 0.25]])
    assert np.array_equal(hysteresis(mag, 0.1, 0.2), [[0, 1, 1]])
    # An isolated weak pixel with no strong anchor is dropped.
    lonely = np.array([[0.15, 0.0, 0.0]])
    assert np.array_equal(hysteresis(lonely, 0.1, 0.2), [[0, 0, 0]])


def test_hysteresis_uses_8_connectivity():
    mag = np.zeros((3, 3))
    mag[0, 0] = 0.5  # strong
    mag[1, 1] = 0.15  # weak, diagonal neighbor
    mag[2, 2] = 0.15  # weak, chained through (1, 1)
    out = hysteresis(mag, 0.1, 0.2)
    assert out[1, 1] == 1 and out[2, 2] == 1


def test_hysteresis_matches_oracle_exactly():
    rng = np.random.default_rng(11)
    for _ in range(10):
        mag = rng.random((16, 16)) * 0.4
        assert np.array_equal(hysteresis(mag, 0.1, 0.2), oracle_hysteresis(mag, 0.1, 0.2))


def test_bad_thresholds():
    mag = np.zeros((4, 4))
    for lo, hi in [(0.2, 0.1), (0.1, 0.1), (0.0, 0.2), (-0.1, 0.2)]:
        with pytest.raises(BadThresholds):
            hysteresis(mag, lo, hi)
        with pytest.raises(BadThresholds):
            canny_edges(np.zeros((8, 8)), 1.0, lo, hi)


def test_canny_constant_image_is_zero():
    for value in (0.0, 0.5, 1.0):
        out = canny_edges(np.full((16, 16), value))
        assert out.dtype == np.uint8
        assert np.all(out == 0)


def test_canny_vertical_step_matches_oracle():
    # The pinned example: a 0 -> 1 step between columns 7 and 8 at defaults.
    img = np.zeros((16, 16))
    img[:, 8:] = 1.0
    ours = canny_edges(img)
    ref = oracle_canny(img)
    assert np.array_equal(ours, ref)
    assert ours.sum() > 0
    # The response is a vertical contour confined to the step's vicinity.
    cols = np.nonzero(ours.any(axis=0))[0]
    assert all(6 <= c <= 9 for c in cols)


def test_canny_random_images_match_oracle():
    rng = np.random.default_rng(12)
    for _ in range(25):
        img = rng.random((16, 16))
        assert np.array_equal(canny_edges(img), oracle_canny(img))


def test_canny_nondefault_params_match_oracle():
    rng = np.random.default_rng(13)
    img = rng.random((16, 16))
    assert np.array_equal(
        canny_edges(img, sigma=0.6, lo=0.05, hi=0.3),
        oracle_canny(img, sigma=0.6, lo=0.05, hi=0.3),
    )


def test_canny_rejects_non_2d():
    with pytest.raises(ShapeMismatch):
        canny_edges(np.zeros((8, 8, 3)))


def test_glyph_edges_hug_glyph_boundary():
    # Edge pixels of a rendered glyph canvas stay within a 2-pixel dilation
    # of the ink boundary, and there are some.
    canvas = compose_canvas([TextLineSpec("3A", (2, 2, 28, 14))], (16, 32))
    edges = canny_edges(luminance(canvas.pixels))
    assert edges.sum() > 0
    ink = canvas.glyph_mask.astype(bool)
    # Boundary: pixels whose 3x3 neighborhood mixes ink and background.
    interior = ink & ~chebyshev_dilate(~ink, 1)
    boundary = (ink & ~interior) | (chebyshev_dilate(ink, 1) & ~ink)
    allowed = chebyshev_dilate(boundary, 2)
    assert np.all(edges.astype(bool) <= allowed)


def test_canny_zero_far_from_masked_support():
    # With non-text regions forced to zero, any pixel whose 3-sigma blur
    # support lies entirely in the zeroed region stays off the edge map.
    canvas = compose_canvas([TextLineSpec("7", (20, 6, 30, 15))], (24, 32))
    gray = luminance(canvas.pixels)
    masked = np.zeros_like(gray)
    x0, y0, x1, y1 = canvas.lines[0].spec.box
    masked[y0:y1, x0:x1] = gray[y0:y1, x0:x1]
    edges = canny_edges(masked)
    assert edges.sum() > 0
    radius = max(1, int(math.floor(3.0 * 1.0)))
    support_hits_ink = chebyshev_dilate(masked > 0, radius)
    assert np.all(edges[~support_hits_ink] == 0)
