"""Lossless space-to-depth codec: shapes, exact invertibility, linearity."""

import numpy as np
import pytest
import torch

from glyphflow.codec import LatentCodec
from glyphflow.errors import IndivisibleSize, ShapeMismatch
from glyphflow.images import from_bytes, to_bytes

from oracles import oracle_encode


def test_shape_contract():
    codec = LatentCodec(patch=4)
    z = codec.encode(np.zeros((16, 16, 3)))
    assert z.shape == (4, 4, 48)
    assert codec.latent_channels == 48
    assert codec.latent_size((16, 16)) == (4, 4)
    # h = H/p, w = W/p, c = C*p^2 for a non-square case too.
    z = codec.encode(np.zeros((8, 24, 3)))
    assert z.shape == (2, 6, 48)


def test_uniform_half_encodes_to_zero():
    codec = LatentCodec(patch=4)
    z = codec.encode(np.full((16, 16, 3), 0.5))
    assert np.all(z == 0.0)


def test_zero_latent_decodes_to_half():
    codec = LatentCodec(patch=4)
    img = codec.decode(np.zeros((4, 4, 48)))
    assert img.shape == (16, 16, 3)
    assert np.all(img == 0.5)


def test_affine_superposition():
    codec = LatentCodec(patch=2)
    rng = np.random.default_rng(0)
    for _ in range(5):
        a = rng.random((8, 8, 3))
        b = rng.random((8, 8, 3))
        # encode(x) = rearrange(2x - 1), so encode(a) + encode(b) equals
        # encode(a + b) minus the constant 1 offset, elementwise.
        lhs = codec.encode(a) + codec.encode(b)
        rhs = codec.encode(a + b) - 1.0
        assert np.max(np.abs(lhs - rhs)) <= 1e-6


def test_roundtrip_bitwise_exact_at_f32():
    codec = LatentCodec(patch=4)
    rng = np.random.default_rng(1)
    for _ in range(100):
        x = rng.random((16, 16, 3)).astype(np.float32)
        back = codec.decode(codec.encode(x)).astype(np.float32)
        assert back.tobytes() == x.tobytes()


def test_quantized_image_roundtrip():
    # A dataset image decoded from bytes survives encode/decode and
    # re-quantizes to the identical bytes.
    codec = LatentCodec(patch=4)
    rng = np.random.default_rng(2)
    raw = rng.integers(0, 256, size=(16, 16, 3), dtype=np.uint8)
    img = from_bytes(raw)
    out = codec.decode(codec.encode(img))
    assert np.array_equal(to_bytes(out), raw)


def test_single_channel_images():
    codec = LatentCodec(patch=4, image_channels=1)
    rng = np.random.default_rng(3)
    flat = rng.random((16, 16))
    z = codec.encode(flat)
    assert z.shape == (4, 4, 16)
    # (H, W) and (H, W, 1) are the same image.
    assert np.array_equal(z, codec.encode(flat[:, :, None]))
    back = codec.decode(z)
    assert back.shape == (16, 16, 1)
    assert np.allclose(back[:, :, 0], flat, atol=0)


def test_channel_block_layout():
    # Input channel c owns latent channels [c*p^2, (c+1)*p^2), row-major
    # over patch cells: a lone 1.0 at (py, px, c) lights exactly one slot.
    p = 4
    codec = LatentCodec(patch=p)
    for c, py, px in [(0, 0, 0), (1, 2, 3), (2, 3, 1)]:
        img = np.zeros((p, p, 3))
        img[py, px, c] = 1.0
        z = codec.encode(img)
        assert z.shape == (1, 1, 3 * p * p)
        slot = c * p * p + py * p + px
        assert z[0, 0, slot] == 1.0
        others = np.delete(z[0, 0], slot)
        assert np.all(others == -1.0)


def test_encode_matches_oracle():
    rng = np.random.default_rng(4)
    for patch in (2, 4):
        codec = LatentCodec(patch=patch)
        img = rng.random((8, 8, 3))
        assert np.array_equal(codec.encode(img), oracle_encode(img, patch))
    gray = rng.random((8, 8))
    codec1 = LatentCodec(patch=2, image_channels=1)
    assert np.array_equal(codec1.encode(gray), oracle_encode(gray, 2))


def test_indivisible_size():
    codec = LatentCodec(patch=4)
    with pytest.raises(IndivisibleSize):
        codec.encode(np.zeros((15, 16, 3)))
    with pytest.raises(IndivisibleSize):
        codec.encode(np.zeros((16, 18, 3)))
    with pytest.raises(IndivisibleSize):
        codec.latent_size((16, 15))
    with pytest.raises(IndivisibleSize):
        LatentCodec(patch=0)


def test_bad_shapes():
    codec = LatentCodec(patch=4)
    with pytest.raises(ShapeMismatch):
        codec.encode(np.zeros((2, 16, 16, 3)))
    with pytest.raises(ShapeMismatch):
        codec.decode(np.zeros((4, 4)))
    with pytest.raises(ShapeMismatch):
        # 18 channels is not a multiple of p^2 = 16.
        codec.decode(np.zeros((4, 4, 18)))


def test_learned_kind_is_reserved():
    with pytest.raises(NotImplementedError):
        LatentCodec(kind="learned")


def test_torch_path_matches_numpy():
    codec = LatentCodec(patch=4)
    rng = np.random.default_rng(5)
    img = rng.random((2, 3, 16, 16)).astype(np.float32)
    zt = codec.encode_torch(torch.from_numpy(img))
    for b in range(2):
        zn = codec.encode(img[b].transpose(1, 2, 0))
        assert np.allclose(zt[b].numpy(), zn.transpose(2, 0, 1), atol=1e-6)
    back = codec.decode_torch(zt)
    assert torch.allclose(back, torch.from_numpy(img), atol=1e-6)


def test_torch_dtype_and_grad():
    codec = LatentCodec(patch=2)
    x32 = torch.rand(1, 3, 8, 8, dtype=torch.float32, requires_grad=True)
    z = codec.encode_torch(x32)
    assert z.dtype == torch.float32
    assert codec.encode_torch(x32.double()).dtype == torch.float64
    # Differentiable: d(sum 2x-1)/dx = 2 everywhere.
    z.sum().backward()
    assert torch.all(x32.grad == 2.0)
    with pytest.raises(ShapeMismatch):
        codec.encode_torch(torch.zeros(3, 8, 8))
    with pytest.raises(ShapeMismatch):
        codec.decode_torch(torch.zeros(1, 5, 4, 4))
    with pytest.raises(IndivisibleSize):
        codec.encode_torch(torch.zeros(1, 3, 7, 8))
