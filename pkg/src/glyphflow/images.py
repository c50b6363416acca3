"""Binary PPM/PGM image files and basic pixel conversions.

Images are exchanged on disk as binary netpbm files: P6 (PPM, maxval 255)
for RGB and P5 (PGM, maxval 255) for single-channel masks and edge maps.
In memory, images are float arrays in [0, 1], shaped (H, W, 3) for RGB and
(H, W) for grayscale.
"""

from __future__ import annotations

import numpy as np

from .errors import ParseError

# Rec. 709 luma weights, used everywhere a color image is reduced to gray.
_LUMA = np.array([0.2126, 0.7152, 0.0722])


def luminance(image: np.ndarray) -> np.ndarray:
    """Collapse an (H, W, 3) image to (H, W) luma. Grayscale passes through."""
    image = np.asarray(image)
    if image.ndim == 2:
        return image
    if image.ndim == 3 and image.shape[2] == 1:
        return image[:, :, 0]
    if image.ndim == 3 and image.shape[2] == 3:
        return image @ _LUMA.astype(image.dtype)
    raise ParseError(f"expected (H,W), (H,W,1) or (H,W,3) image, got {image.shape}")


def to_bytes(image: np.ndarray) -> np.ndarray:
    """Quantize [0,1] floats to uint8 with round-half-away behaviour of rint."""
    return np.rint(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)


def from_bytes(raw: np.ndarray) -> np.ndarray:
    return raw.astype(np.float32) / np.float32(255.0)


def write_ppm(path, image: np.ndarray) -> None:
    """Write an (H, W, 3) float image as binary P6, maxval 255."""
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ParseError(f"PPM wants (H,W,3), got {image.shape}")
    h, w = image.shape[:2]
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(to_bytes(image).tobytes())


def write_pgm(path, image: np.ndarray) -> None:
    """Write an (H, W) float image as binary P5, maxval 255."""
    image = np.asarray(image)
    if image.ndim == 3 and image.shape[2] == 1:
        image = image[:, :, 0]
    if image.ndim != 2:
        raise ParseError(f"PGM wants (H,W), got {image.shape}")
    h, w = image.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(to_bytes(image).tobytes())


def _read_header(f):
    """Read magic, width, height, maxval, skipping whitespace and # comments."""
    magic = f.read(2)
    tokens = []
    while len(tokens) < 3:
        c = f.read(1)
        if not c:
            raise ParseError("truncated netpbm header")
        if c == b"#":
            while c not in (b"\n", b""):
                c = f.read(1)
            continue
        if c.isspace():
            continue
        tok = c
        while True:
            c = f.read(1)
            if not c or c.isspace():
                break
            tok += c
        tokens.append(tok)
    try:
        w, h, maxval = (int(t) for t in tokens)
    except ValueError as e:
        raise ParseError(f"bad netpbm header tokens {tokens}") from e
    if maxval != 255:
        raise ParseError(f"only maxval 255 supported, got {maxval}")
    return magic, w, h


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as f:
        magic, w, h = _read_header(f)
        if magic != b"P6":
            raise ParseError(f"not a binary PPM: magic {magic!r}")
        raw = f.read(w * h * 3)
    if len(raw) != w * h * 3:
        raise ParseError("truncated PPM payload")
    return from_bytes(np.frombuffer(raw, dtype=np.uint8).reshape(h, w, 3))


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as f:
        magic, w, h = _read_header(f)
        if magic != b"P5":
            raise ParseError(f"not a binary PGM: magic {magic!r}")
        raw = f.read(w * h)
    if len(raw) != w * h:
        raise ParseError("truncated PGM payload")
    return from_bytes(np.frombuffer(raw, dtype=np.uint8).reshape(h, w))
