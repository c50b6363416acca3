"""Independent reference implementations used by the test suite.

Each oracle re-derives a result with a deliberately different algorithmic
shape (scalar loops, full DP matrices, closed-form arithmetic) from the
library's vectorized/recursive code, sharing only the pinned numeric
conventions (float64 taps, reflect padding, ascending accumulation order,
comparison-based direction bins). They are frozen: tests compare the
library against these, never the other way around.
"""

from __future__ import annotations

import math
from typing import Dict, List, Sequence, Tuple

import numpy as np

TAN_22_5 = math.sqrt(2.0) - 1.0
SOBEL_X = ((-1.0, 0.0, 1.0), (-2.0, 0.0, 2.0), (-1.0, 0.0, 1.0))
SOBEL_Y = ((-1.0, -2.0, -1.0), (0.0, 0.0, 0.0), (1.0, 2.0, 1.0))


# --- canny: straight-line scalar implementation ------------------------------

def _reflect(i: int, n: int) -> int:
    """Mirror an index into [0, n) without repeating the edge sample."""
    while i < 0 or i >= n:
        if i < 0:
            i = -i
        if i >= n:
            i = 2 * (n - 1) - i
    return i


def oracle_gaussian_taps(sigma: float) -> np.ndarray:
    radius = max(1, int(math.floor(3.0 * sigma)))
    taps = np.array(
        [math.exp(-(i * i) / (2.0 * sigma * sigma)) for i in range(-radius, radius + 1)],
        dtype=np.float64,
    )
    return taps / np.sum(taps)


def oracle_blur(image: np.ndarray, sigma: float) -> np.ndarray:
    img = np.asarray(image, dtype=np.float64)
    taps = oracle_gaussian_taps(sigma)
    radius = len(taps) // 2
    h, w = img.shape
    tmp = np.zeros((h, w), dtype=np.float64)
    for y in range(h):
        for x in range(w):
            acc = 0.0
            for k in range(2 * radius + 1):
                acc += taps[k] * img[y, _reflect(x + k - radius, w)]
            tmp[y, x] = acc
    out = np.zeros((h, w), dtype=np.float64)
    for y in range(h):
        for x in range(w):
            acc = 0.0
            for k in range(2 * radius + 1):
                acc += taps[k] * tmp[_reflect(y + k - radius, h), x]
            out[y, x] = acc
    return out


def oracle_sobel(image: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    img = np.asarray(image, dtype=np.float64)
    h, w = img.shape
    gx = np.zeros((h, w), dtype=np.float64)
    gy = np.zeros((h, w), dtype=np.float64)
    for y in range(h):
        for x in range(w):
            ax = 0.0
            ay = 0.0
            for dy in range(3):
                for dx in range(3):
                    v = img[_reflect(y + dy - 1, h), _reflect(x + dx - 1, w)]
                    ax += SOBEL_X[dy][dx] * v
                    ay += SOBEL_Y[dy][dx] * v
            gx[y, x] = ax
            gy[y, x] = ay
    return gx, gy


def _oracle_bin(gx: float, gy: float) -> int:
    ax, ay = abs(gx), abs(gy)
    if ay <= TAN_22_5 * ax:
        return 0
    if ax <= TAN_22_5 * ay:
        return 2
    return 1 if gx * gy > 0 else 3


_OFFSETS = {0: (0, 1), 1: (1, 1), 2: (1, 0), 3: (1, -1)}


def oracle_nms(mag: np.ndarray, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    h, w = mag.shape
    out = np.zeros_like(mag)
    for y in range(1, h - 1):
        for x in range(1, w - 1):
            dy, dx = _OFFSETS[_oracle_bin(gx[y, x], gy[y, x])]
            center = mag[y, x]
            if center >= mag[y + dy, x + dx] and center >= mag[y - dy, x - dx]:
                out[y, x] = center
    return out


def oracle_hysteresis(mag: np.ndarray, lo: float, hi: float) -> np.ndarray:
    h, w = mag.shape
    keep = np.zeros((h, w), dtype=np.uint8)
    stack = [
        (y, x) for y in range(h) for x in range(w) if mag[y, x] >= hi
    ]
    for y, x in stack:
        keep[y, x] = 1
    while stack:
        y, x = stack.pop()
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                ny, nx = y + dy, x + dx
                if (
                    0 <= ny < h
                    and 0 <= nx < w
                    and not keep[ny, nx]
                    and mag[ny, nx] >= lo
                ):
                    keep[ny, nx] = 1
                    stack.append((ny, nx))
    return keep


def oracle_canny(
    image: np.ndarray, sigma: float = 1.0, lo: float = 0.1, hi: float = 0.2
) -> np.ndarray:
    smooth = oracle_blur(image, sigma)
    gx, gy = oracle_sobel(smooth)
    h, w = smooth.shape
    mag = np.zeros((h, w), dtype=np.float64)
    for y in range(h):
        for x in range(w):
            mag[y, x] = math.sqrt(gx[y, x] * gx[y, x] + gy[y, x] * gy[y, x])
    return oracle_hysteresis(oracle_nms(mag, gx, gy), lo, hi)


# --- edit distance: full DP matrix -------------------------------------------

def oracle_edit_distance(a: str, b: str) -> int:
    m, n = len(a), len(b)
    d = [[0] * (n + 1) for _ in range(m + 1)]
    for i in range(m + 1):
        d[i][0] = i
    for j in range(n + 1):
        d[0][j] = j
    for i in range(1, m + 1):
        for j in range(1, n + 1):
            cost = 0 if a[i - 1] == b[j - 1] else 1
            d[i][j] = min(d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + cost)
    return d[m][n]


def oracle_ned(a: str, b: str) -> float:
    longest = max(len(a), len(b))
    return oracle_edit_distance(a, b) / longest if longest else 0.0


# --- Eq. 1 perceptual loss: scalar loop over the same feature maps -----------

def oracle_perceptual_loss(
    pred_maps: Sequence[np.ndarray], gt_maps: Sequence[np.ndarray]
) -> float:
    """Sum over lines of mean over positions of the channel-summed squared
    feature difference, accumulated with python-float (f64) arithmetic."""
    total = 0.0
    for mp, mg in zip(pred_maps, gt_maps):
        c, h, w = mp.shape
        acc = 0.0
        for i in range(h):
            for j in range(w):
                s = 0.0
                for ch in range(c):
                    d = float(mp[ch, i, j]) - float(mg[ch, i, j])
                    s += d * d
                acc += s
        total += acc / (h * w)
    return total


# --- bilinear crop resize: loop mirror of the gather/lerp path ---------------

def oracle_bilinear_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """align_corners=False convention: src = (i + 0.5) * in / out - 0.5,
    clamped to [0, n_in - 1]."""
    src = np.asarray(img, dtype=np.float64)
    in_h, in_w = src.shape
    out = np.zeros((out_h, out_w), dtype=np.float64)

    def axis(i, n_in, n_out):
        pos = (i + 0.5) * n_in / n_out - 0.5
        pos = min(max(pos, 0.0), n_in - 1.0)
        lo = int(math.floor(pos))
        lo = min(lo, n_in - 1)
        hi = min(lo + 1, n_in - 1)
        return lo, hi, pos - lo

    for i in range(out_h):
        y0, y1, fy = axis(i, in_h, out_h)
        for j in range(out_w):
            x0, x1, fx = axis(j, in_w, out_w)
            top = src[y0, x0] * (1.0 - fx) + src[y0, x1] * fx
            bot = src[y1, x0] * (1.0 - fx) + src[y1, x1] * fx
            out[i, j] = top * (1.0 - fy) + bot * fy
    return out


# --- space-to-depth codec: loop mirror ---------------------------------------

def oracle_encode(image: np.ndarray, patch: int) -> np.ndarray:
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 2:
        img = img[:, :, None]
    h, w, c = img.shape
    hp, wp = h // patch, w // patch
    z = np.zeros((hp, wp, c * patch * patch), dtype=np.float64)
    for y in range(hp):
        for x in range(wp):
            for ch in range(c):
                for py in range(patch):
                    for px in range(patch):
                        z[y, x, ch * patch * patch + py * patch + px] = (
                            2.0 * img[y * patch + py, x * patch + px, ch] - 1.0
                        )
    return z


# --- parameter enumeration from the config arithmetic ------------------------

def _conv_params(cin: int, cout: int, k: int) -> int:
    return cout * cin * k * k + cout


def _resblock_params(channels: int, time_dim: int) -> int:
    norm = 2 * channels
    conv = _conv_params(channels, channels, 3)
    time_proj = time_dim * 2 * channels + 2 * channels  # scale and shift
    return norm + conv + time_proj + norm + conv


def _time_params(time_dim: int) -> int:
    linear = time_dim * time_dim + time_dim
    return 2 * linear


def oracle_base_param_count(
    latent_channels: int,
    widths: Sequence[int],
    blocks_per_level: int,
    time_dim: int,
) -> int:
    w = list(widths)
    levels = len(w)
    total = _time_params(time_dim)
    total += _conv_params(latent_channels, w[0], 3)
    for i in range(levels):
        total += blocks_per_level * _resblock_params(w[i], time_dim)
    for i in range(levels - 1):
        total += _conv_params(w[i], w[i + 1], 3)
    total += _resblock_params(w[-1], time_dim)
    for i in range(levels - 1):
        total += _conv_params(w[i + 1], w[i], 3)
        total += _conv_params(2 * w[i], w[i], 3)
        total += blocks_per_level * _resblock_params(w[i], time_dim)
    total += 2 * w[0]
    total += _conv_params(w[0], latent_channels, 3)
    return total


def oracle_control_param_count(
    latent_channels: int,
    cond_channels: int,
    widths: Sequence[int],
    blocks_per_level: int,
    time_dim: int,
    control_levels: int,
) -> int:
    w = list(widths)
    total = _time_params(time_dim)
    total += _conv_params(cond_channels, latent_channels, 1)
    total += _conv_params(2 * latent_channels, w[0], 3)
    for i in range(control_levels):
        total += blocks_per_level * _resblock_params(w[i], time_dim)
    for i in range(control_levels - 1):
        total += _conv_params(w[i], w[i + 1], 3)
    for i in range(control_levels):
        total += _conv_params(w[i], w[i], 1)
    return total


def oracle_model_param_count(cfg) -> int:
    return oracle_base_param_count(
        cfg.latent_channels, cfg.widths, cfg.blocks_per_level, cfg.time_dim
    ) + oracle_control_param_count(
        cfg.latent_channels,
        cfg.cond_channels,
        cfg.widths,
        cfg.blocks_per_level,
        cfg.time_dim,
        cfg.control_levels,
    )


# --- rectified-flow identities ------------------------------------------------

def oracle_interpolant(z0: np.ndarray, eps: np.ndarray, t: float) -> np.ndarray:
    return (1.0 - t) * z0 + t * eps


def oracle_velocity(z0: np.ndarray, eps: np.ndarray) -> np.ndarray:
    return eps - z0


def oracle_recover_x0(z_t: np.ndarray, v: np.ndarray, t: float) -> np.ndarray:
    return z_t - t * v


# --- nearest-neighbor mask resample -------------------------------------------

def oracle_resample_mask(mask: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    src = np.asarray(mask)
    h, w = src.shape
    out = np.zeros((out_h, out_w), dtype=src.dtype)
    for i in range(out_h):
        for j in range(out_w):
            out[i, j] = src[(i * h) // out_h, (j * w) // out_w]
    return out
