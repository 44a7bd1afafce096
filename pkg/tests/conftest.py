from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from spectral_cs.functions import gaussian
from spectral_cs.operators import HermitianOperator, SpectralTriple, random_hermitian

settings.register_profile(
    "default", deadline=None, max_examples=25, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def ginibre(rng, dim, scale=1.0):
    return scale * (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2 * dim)


def make_triple(rng, dim, scale=1.0, s=1):
    return SpectralTriple(HermitianOperator(random_hermitian(rng, dim, scale)), {}, s)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture
def f():
    return gaussian(1.0)
