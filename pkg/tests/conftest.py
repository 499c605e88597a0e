import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from sfgru.dataset import SynthConfig, synth_generate  # noqa: E402


@pytest.fixture(scope="session")
def small_tracks():
    """20 short synthetic tracks (4.7 s each) with mirrored and full-context vectors."""
    cfg = SynthConfig(n_tracks=20, track_len_frames=140, snr=8.0, seed=11,
                      flip_context=True, full_context=True)
    return synth_generate(cfg)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
