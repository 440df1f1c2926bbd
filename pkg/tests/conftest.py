import sys
from pathlib import Path

import matplotlib
import numpy as np
import pytest
import torch

matplotlib.use("Agg")
sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from pipeline.acmdm.config import build_model  # noqa: E402
from pipeline.acmdm.model import ACMDM  # noqa: E402
from pipeline.motion_data.normalization import compute_stats  # noqa: E402
from pipeline.motion_data.synthetic import synth_dataset  # noqa: E402
from services.text_encoder import HashBagTextEncoder  # noqa: E402


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(0)


@pytest.fixture(scope="session")
def small_corpus():
    """Twelve synthetic motions in meters plus their manifest."""
    return synth_dataset(12, seed=7)


@pytest.fixture(scope="session")
def corpus_stats(small_corpus):
    motions, _ = small_corpus
    return compute_stats(motions)


@pytest.fixture(scope="session")
def text_encoder() -> HashBagTextEncoder:
    return HashBagTextEncoder()


@pytest.fixture
def tiny_model() -> ACMDM:
    torch.manual_seed(0)
    return ACMDM(build_model("tiny", patch=2)).eval()
