import os
import tempfile

import numpy as np
import pytest

TEST_OUT = os.path.join(tempfile.gettempdir(), "rff-distill-tests")
os.environ["RFF_DEFAULT_OUT_DIR"] = TEST_OUT
os.environ["RFF_LATENCY_RUNS"] = "3"
os.environ["RFF_LATENCY_WARMUP"] = "0"
os.environ.setdefault("RFF_LOG_LEVEL", "WARNING")

from rff_distill.core.config import get_settings  # noqa: E402


@pytest.fixture(autouse=True)
def _fresh_settings():
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
