"""PPM/PGM io and pixel conversions."""

import numpy as np
import pytest

from glyphflow.errors import ParseError
from glyphflow.images import (
    from_bytes,
    luminance,
    read_pgm,
    read_ppm,
    to_bytes,
    write_pgm,
    write_ppm,
)


def test_luminance_rec709_weights():
    img = np.zeros((1, 3, 3), dtype=np.float64)
    img[0, 0] = (1.0, 0.0, 0.0)
    img[0, 1] = (0.0, 1.0, 0.0)
    img[0, 2] = (0.0, 0.0, 1.0)
    lum = luminance(img)
    assert lum.shape == (1, 3)
    assert abs(lum[0, 0] - 0.2126) < 1e-12
    assert abs(lum[0, 1] - 0.7152) < 1e-12
    assert abs(lum[0, 2] - 0.0722) < 1e-12


def test_luminance_weights_sum_to_one():
    white = np.ones((2, 2, 3))
    assert np.allclose(luminance(white), 1.0, atol=1e-12)


def test_luminance_grayscale_passthrough():
    gray = np.random.default_rng(0).random((4, 5))
    assert luminance(gray) is gray or np.array_equal(luminance(gray), gray)
    single = gray[:, :, None]
    assert np.array_equal(luminance(single), gray)


def test_luminance_rejects_bad_shape():
    with pytest.raises(ParseError):
        luminance(np.zeros((4, 4, 2)))
    with pytest.raises(ParseError):
        luminance(np.zeros((4,)))


def test_bytes_roundtrip_on_quantized_grid():
    ks = np.arange(256, dtype=np.float32)
    img = (ks / np.float32(255.0)).reshape(16, 16)
    assert np.array_equal(to_bytes(img), ks.reshape(16, 16).astype(np.uint8))
    assert np.array_equal(from_bytes(to_bytes(img)), img)


def test_to_bytes_clips_out_of_range():
    img = np.array([[-0.5, 1.5, 0.0, 1.0]])
    assert np.array_equal(to_bytes(img), np.array([[0, 255, 0, 255]], np.uint8))


def test_ppm_roundtrip_exact(tmp_path):
    rng = np.random.default_rng(1)
    img = from_bytes(rng.integers(0, 256, size=(7, 5, 3)).astype(np.uint8))
    path = tmp_path / "x.ppm"
    write_ppm(path, img)
    assert np.array_equal(read_ppm(path), img)


def test_ppm_file_bytes(tmp_path):
    img = np.zeros((2, 3, 3), dtype=np.float32)
    path = tmp_path / "x.ppm"
    write_ppm(path, img)
    raw = path.read_bytes()
    assert raw == b"P6\n3 2\n255\n" + b"\x00" * 18


def test_pgm_roundtrip_exact(tmp_path):
    rng = np.random.default_rng(2)
    img = from_bytes(rng.integers(0, 256, size=(6, 9)).astype(np.uint8))
    path = tmp_path / "x.pgm"
    write_pgm(path, img)
    assert np.array_equal(read_pgm(path), img)


def test_header_comments_and_whitespace(tmp_path):
    path = tmp_path / "c.ppm"
    payload = bytes(range(12))
    path.write_bytes(b"P6\n# a comment\n 2 # inline\n2\n# more\n255\n" + payload)
    img = read_ppm(path)
    assert img.shape == (2, 2, 3)
    assert np.array_equal(to_bytes(img).ravel(), np.frombuffer(payload, np.uint8))


def test_bad_maxval_rejected(tmp_path):
    path = tmp_path / "m.ppm"
    path.write_bytes(b"P6\n1 1\n65535\n\x00\x00\x00\x00\x00\x00")
    with pytest.raises(ParseError):
        read_ppm(path)


def test_truncated_payload_rejected(tmp_path):
    path = tmp_path / "t.ppm"
    path.write_bytes(b"P6\n2 2\n255\n\x00\x00\x00")
    with pytest.raises(ParseError):
        read_ppm(path)


def test_truncated_header_rejected(tmp_path):
    path = tmp_path / "h.pgm"
    path.write_bytes(b"P5\n2")
    with pytest.raises(ParseError):
        read_pgm(path)


def test_wrong_magic_rejected(tmp_path):
    path = tmp_path / "w.ppm"
    path.write_bytes(b"P5\n1 1\n255\n\x00")
    with pytest.raises(ParseError):
        read_ppm(path)


def test_write_ppm_rejects_grayscale(tmp_path):
    with pytest.raises(ParseError):
        write_ppm(tmp_path / "bad.ppm", np.zeros((4, 4)))


def test_write_pgm_rejects_rgb(tmp_path):
    with pytest.raises(ParseError):
        write_pgm(tmp_path / "bad.pgm", np.zeros((4, 4, 3)))
