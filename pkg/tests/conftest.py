import numpy as np
import pytest

from _data import reference_image, smooth_image


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def ref_image():
    return reference_image()


@pytest.fixture(scope="session")
def small_image():
    return smooth_image(32)


@pytest.fixture(autouse=True)
def _no_cache(monkeypatch):
    monkeypatch.delenv("WAVEBLUR_CACHE", raising=False)
