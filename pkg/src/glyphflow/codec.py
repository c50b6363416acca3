"""Image <-> latent codec.

The default codec is a lossless, linear space-to-depth rearrangement: a
(H, W, C) image in [0, 1] becomes an (H/p, W/p, C*p^2) latent via patch
folding followed by the elementwise affine map x -> 2x - 1. The numpy
path computes in float64, which makes decode(encode(x)) bit-exact for
float32 inputs (the affine map is exact in float64 for any float32 value
of ordinary magnitude); the torch path keeps the input dtype so it can
sit inside autograd graphs.

Channel layout of the latent: input channel c contributes the p^2
consecutive latent channels [c*p^2, (c+1)*p^2), ordered row-major over
the patch cells. A "learned" codec kind is reserved as an interface slot
for a trained autoencoder and is not implemented here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from einops import rearrange

from .errors import IndivisibleSize, ShapeMismatch


@dataclass(frozen=True)
class LatentCodec:
    """Lossless space-to-depth codec with patch size `patch` over
    `image_channels`-channel images."""

    patch: int = 4
    image_channels: int = 3
    kind: str = "lossless"

    def __post_init__(self):
        if self.patch < 1:
            raise IndivisibleSize(f"patch must be >= 1, got {self.patch}")
        if self.kind != "lossless":
            raise NotImplementedError(
                f"codec kind {self.kind!r} is an interface slot; only "
                "'lossless' is implemented"
            )

    @property
    def latent_channels(self) -> int:
        return self.image_channels * self.patch * self.patch

    def latent_size(self, size):
        h, w = size
        self._check_divisible(h, w)
        return h // self.patch, w // self.patch

    def encode(self, image: np.ndarray) -> np.ndarray:
        """(H, W, C) or (H, W) image in [0, 1] -> (H/p, W/p, C*p^2)
        float64 latent in [-1, 1]."""
        img = np.asarray(image, dtype=np.float64)
        if img.ndim == 2:
            img = img[:, :, None]
        if img.ndim != 3:
            raise ShapeMismatch(f"expected (H, W, C) image, got {image.shape}")
        self._check_divisible(img.shape[0], img.shape[1])
        z = rearrange(
            img, "(h p1) (w p2) c -> h w (c p1 p2)", p1=self.patch, p2=self.patch
        )
        return 2.0 * z - 1.0

    def decode(self, z: np.ndarray) -> np.ndarray:
        """Inverse of `encode`; float64 (H, W, C) image, not clamped."""
        lat = np.asarray(z, dtype=np.float64)
        if lat.ndim != 3 or lat.shape[2] % (self.patch * self.patch) != 0:
            raise ShapeMismatch(
                f"latent shape {np.shape(z)} incompatible with patch {self.patch}"
            )
        img = rearrange(
            (lat + 1.0) / 2.0,
            "h w (c p1 p2) -> (h p1) (w p2) c",
            p1=self.patch,
            p2=self.patch,
        )
        return img

    def encode_torch(self, image):
        """(B, C, H, W) tensor in [0, 1] -> (B, C*p^2, H/p, W/p) latent,
        same dtype, differentiable."""
        if image.ndim != 4:
            raise ShapeMismatch(f"expected (B, C, H, W), got {tuple(image.shape)}")
        self._check_divisible(image.shape[2], image.shape[3])
        z = rearrange(
            image, "b c (h p1) (w p2) -> b (c p1 p2) h w", p1=self.patch, p2=self.patch
        )
        return 2.0 * z - 1.0

    def decode_torch(self, z):
        """Inverse of `encode_torch`; same dtype, not clamped."""
        if z.ndim != 4 or z.shape[1] % (self.patch * self.patch) != 0:
            raise ShapeMismatch(
                f"latent shape {tuple(z.shape)} incompatible with patch {self.patch}"
            )
        return rearrange(
            (z + 1.0) / 2.0,
            "b (c p1 p2) h w -> b c (h p1) (w p2)",
            p1=self.patch,
            p2=self.patch,
        )

    def _check_divisible(self, h: int, w: int) -> None:
        if h % self.patch or w % self.patch:
            raise IndivisibleSize(
                f"image size {h}x{w} not divisible by patch {self.patch}"
            )
