"""Shared fixtures: a tiny hand-written font, a micro denoiser config whose
forwards take milliseconds, and a small generated sample set."""

import numpy as np
import pytest

from glyphflow.data import GeneratorConfig, generate_samples
from glyphflow.fonts import parse_bfont
from glyphflow.model import DenoiserConfig
from glyphflow.training import codec_for_denoiser

TINY_BFONT = """\
BFONT 1 3 2
GLYPH U+0041 3
111
101
111
GLYPH U+0042 2
10
01
11
"""


@pytest.fixture
def tiny_font():
    return parse_bfont(TINY_BFONT)


@pytest.fixture(scope="session")
def micro_dcfg():
    return DenoiserConfig(
        latent_channels=12,
        cond_channels=8,
        widths=(8, 16),
        blocks_per_level=1,
        time_dim=8,
        control_levels=2,
    )


@pytest.fixture(scope="session")
def micro_codec(micro_dcfg):
    return codec_for_denoiser(micro_dcfg)


@pytest.fixture(scope="session")
def small_samples():
    return [s for s, _ in generate_samples(0, 8, GeneratorConfig())]
