"""Pytest configuration for cstdoa tests."""

import os
import sys
import tempfile
from pathlib import Path

import numpy as np
import pytest

# Add project root to path
sys.path.insert(0, str(Path(__file__).parent.parent))

# Keep test runs out of the working tree
_scratch = Path(tempfile.mkdtemp(prefix="cstdoa-tests-"))
os.environ.setdefault("DATA_DIR", str(_scratch))
os.environ.setdefault("LOG_LEVEL", "WARNING")

from cstdoa.models import Scenario, SourceSignal, Trajectory  # noqa: E402
from cstdoa.services.sigsim import sinc_interpolate  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def broadband():
    """Band-limited random signal generator: (length, seed) -> samples."""

    def make(length: int, seed: int = 0) -> np.ndarray:
        r = np.random.default_rng(seed)
        spectrum = r.standard_normal(length // 2 + 1) + 1j * r.standard_normal(length // 2 + 1)
        freqs = np.fft.rfftfreq(length)
        spectrum[(freqs < 0.02) | (freqs > 0.2)] = 0.0
        x = np.fft.irfft(spectrum, n=length)
        return x / np.std(x)

    return make


@pytest.fixture
def shifted():
    """x delayed by an integer or fractional number of samples, zero-filled."""

    def make(x: np.ndarray, delay: float) -> np.ndarray:
        n = np.arange(len(x), dtype=np.float64)
        return sinc_interpolate(x, n - delay)

    return make


@pytest.fixture
def static_scenario():
    """Two sensors 1 m apart, noiseless broadband source at a fixed point."""
    return Scenario(
        sensors=[(0.0, 0.0), (1.0, 0.0)],
        source=SourceSignal(kind="noise-burst", band_hz=(300.0, 3000.0), components=32, seed=3),
        trajectory=Trajectory(kind="static", position=(2.0, 3.0)),
        sample_rate=16000.0,
        block_length=255,
        duration=0.1,
    )
