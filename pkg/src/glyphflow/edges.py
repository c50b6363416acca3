"""Canny edge maps with a fully pinned-down numeric recipe.

Every stage is specified exactly so independent implementations can agree
bit-for-bit in float64:

1. Gaussian blur, radius ``max(1, floor(3*sigma))``, taps built per-index
   from ``exp(-i^2 / (2 sigma^2))`` and normalized by their sum; reflect
   padding (no edge repeat); convolve along x then y, accumulating taps in
   ascending index order.
2. Sobel gradients, the full 3x3 stencils accumulated in row-major tap
   order over reflect-padded input.
3. Magnitude ``sqrt(gx^2 + gy^2)`` (IEEE sqrt is correctly rounded).
4. Non-maximum suppression into 4 direction bins chosen by pure
   comparisons against tan(22.5 deg) = sqrt(2) - 1 (no arctan calls, which
   are not correctly rounded); keep pixels >= both neighbors along the
   gradient; zero the one-pixel border.
5. Double-threshold hysteresis: absolute thresholds on magnitude, weak
   pixels kept iff 8-connected (transitively) to a strong pixel.
"""

from __future__ import annotations

import math
from collections import deque
from typing import Tuple

import numpy as np

from .errors import BadThresholds, ShapeMismatch

# tan(22.5 degrees), exactly sqrt(2) - 1.
_TAN_22_5 = math.sqrt(2.0) - 1.0

_SOBEL_X = ((-1.0, 0.0, 1.0), (-2.0, 0.0, 2.0), (-1.0, 0.0, 1.0))
_SOBEL_Y = ((-1.0, -2.0, -1.0), (0.0, 0.0, 0.0), (1.0, 2.0, 1.0))


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Normalized 1-D Gaussian taps, radius max(1, floor(3*sigma))."""
    if not sigma > 0.0:
        raise BadThresholds(f"sigma must be > 0, got {sigma}")
    radius = max(1, int(math.floor(3.0 * sigma)))
    taps = np.array(
        [math.exp(-(i * i) / (2.0 * sigma * sigma)) for i in range(-radius, radius + 1)],
        dtype=np.float64,
    )
    return taps / np.sum(taps)


def blur(image: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur in float64 with reflect padding."""
    img = _check_2d(image)
    taps = gaussian_kernel(sigma)
    radius = len(taps) // 2
    h, w = img.shape
    if min(h, w) < radius + 1:
        raise ShapeMismatch(
            f"image {img.shape} too small for blur radius {radius}"
        )
    pad = np.pad(img, ((0, 0), (radius, radius)), mode="reflect")
    out = np.zeros_like(img)
    for k in range(2 * radius + 1):
        out += taps[k] * pad[:, k:k + w]
    pad = np.pad(out, ((radius, radius), (0, 0)), mode="reflect")
    out = np.zeros_like(img)
    for k in range(2 * radius + 1):
        out += taps[k] * pad[k:k + h, :]
    return out


def sobel(image: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Sobel gradients (gx, gy) in float64 with reflect padding."""
    img = _check_2d(image)
    h, w = img.shape
    if min(h, w) < 2:
        raise ShapeMismatch(f"image {img.shape} too small for sobel")
    pad = np.pad(img, 1, mode="reflect")
    gx = np.zeros_like(img)
    gy = np.zeros_like(img)
    for dy in range(3):
        for dx in range(3):
            win = pad[dy:dy + h, dx:dx + w]
            gx += _SOBEL_X[dy][dx] * win
            gy += _SOBEL_Y[dy][dx] * win
    return gx, gy


def _direction_bins(gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Quantize gradient direction to 4 bins without transcendentals.

    0: horizontal gradient (compare x neighbors), 1: down-right diagonal,
    2: vertical, 3: down-left diagonal.
    """
    ax, ay = np.abs(gx), np.abs(gy)
    bins = np.zeros(gx.shape, dtype=np.int8)
    horizontal = ay <= _TAN_22_5 * ax
    vertical = ax <= _TAN_22_5 * ay
    diag = ~horizontal & ~vertical
    bins[vertical] = 2
    bins[diag & (gx * gy > 0)] = 1
    bins[diag & (gx * gy <= 0)] = 3
    bins[horizontal] = 0
    return bins


_BIN_OFFSETS = {0: (0, 1), 1: (1, 1), 2: (1, 0), 3: (1, -1)}


def nonmax_suppress(mag: np.ndarray, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Keep magnitude only at local maxima along the quantized gradient;
    the one-pixel border is zeroed."""
    h, w = mag.shape
    bins = _direction_bins(gx, gy)
    out = np.zeros_like(mag)
    for b, (dy, dx) in _BIN_OFFSETS.items():
        sel = bins[1:-1, 1:-1] == b
        center = mag[1:-1, 1:-1]
        fwd = mag[1 + dy:h - 1 + dy, 1 + dx:w - 1 + dx]
        bwd = mag[1 - dy:h - 1 - dy, 1 - dx:w - 1 - dx]
        keep = sel & (center >= fwd) & (center >= bwd)
        out[1:-1, 1:-1][keep] = center[keep]
    return out


def hysteresis(mag: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Double-threshold linking: weak pixels (>= lo) survive only when
    8-connected through other weak pixels to a strong pixel (>= hi)."""
    if not (0.0 < lo < hi):
        raise BadThresholds(f"need 0 < lo < hi, got lo={lo} hi={hi}")
    weak = mag >= lo
    strong = mag >= hi
    h, w = mag.shape
    visited = strong.copy()
    queue = deque(zip(*np.nonzero(strong)))
    while queue:
        y, x = queue.popleft()
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                ny, nx = y + dy, x + dx
                if 0 <= ny < h and 0 <= nx < w and weak[ny, nx] and not visited[ny, nx]:
                    visited[ny, nx] = True
                    queue.append((ny, nx))
    return visited.astype(np.uint8)


def canny_edges(
    image: np.ndarray,
    sigma: float = 1.0,
    lo: float = 0.1,
    hi: float = 0.2,
) -> np.ndarray:
    """Binary uint8 edge map of a 2-D grayscale image in [0, 1]."""
    if not (0.0 < lo < hi):
        raise BadThresholds(f"need 0 < lo < hi, got lo={lo} hi={hi}")
    smooth = blur(image, sigma)
    gx, gy = sobel(smooth)
    mag = np.sqrt(gx * gx + gy * gy)
    return hysteresis(nonmax_suppress(mag, gx, gy), lo, hi)


def _check_2d(image: np.ndarray) -> np.ndarray:
    arr = np.asarray(image)
    if arr.ndim != 2:
        raise ShapeMismatch(f"expected a 2-D grayscale image, got {arr.shape}")
    return arr.astype(np.float64)
