import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from ctse.toy_corpus import make_toy_corpus


@pytest.fixture(scope="session")
def toy_corpus_small():
    """Small corpus for fast functional tests (not for training quality)."""
    return make_toy_corpus(seed=1, n_speakers=6, utts_per_speaker=8, n_noise=3, n_rirs=2)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)
