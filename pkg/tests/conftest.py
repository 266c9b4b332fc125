import os
import sys

import numpy as np
import pytest

sys.path.append(os.path.join(os.path.dirname(__file__), '..', 'src'))

from core.config import load_codec_config  # noqa: E402
from core.synthetic import constant_cloud, gradient_cloud, quadrant_cloud  # noqa: E402


@pytest.fixture
def small_config():
    """Configuración pequeña: pocas capas y lotes cortos para pruebas rápidas."""
    return load_codec_config(preset='desk', overrides={
        'LOD_T': 3,
        'LOD_L': 6,
        'PARTITION_BATCH_N': 32,
        'PARTITION_BATCHES_PER_BLOCK': 2,
        'PARTITION_SMOOTH_NEIGHBORS': 8,
    })


@pytest.fixture
def rgb_cloud():
    return gradient_cloud(count=600, extent=24, seed=1)


@pytest.fixture
def single_cloud():
    return gradient_cloud(count=600, extent=24, seed=2, single=True)


@pytest.fixture
def quadrants():
    return quadrant_cloud(count=800, extent=32, seed=3)


@pytest.fixture
def flat_cloud():
    return constant_cloud(count=10000, extent=32, seed=4)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
