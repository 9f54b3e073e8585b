import numpy as np
import pytest
from hypothesis import settings

from artivoc import runtime
from artivoc.speaker import SpeakerEmbedding

settings.register_profile("ci", max_examples=50, deadline=None)
settings.load_profile("ci")


@pytest.fixture(scope="session")
def config():
    return runtime.default_config()


@pytest.fixture(scope="session")
def models(config):
    return runtime.build_models(config)


@pytest.fixture(scope="session")
def zero_embedding():
    return SpeakerEmbedding(np.zeros(128, dtype=np.float32), "zero")


@pytest.fixture(scope="session")
def random_embedding():
    rng = np.random.default_rng(99)
    return SpeakerEmbedding(rng.normal(0, 0.3, 128).astype(np.float32), "rand")


def random_signal(seconds: float = 2.0, seed: int = 0, amp: float = 0.5) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.uniform(-amp, amp, int(seconds * 16000)).astype(np.float32)


def speechlike_signal(seconds: float = 2.0, seed: int = 0) -> np.ndarray:
    """Pitched multi-harmonic signal with a wandering f0 plus light noise;
    enough structure for enrollment and pitch-path tests."""
    rng = np.random.default_rng(seed)
    n = int(seconds * 16000)
    t = np.arange(n) / 16000.0
    f0 = 140.0 + 40.0 * np.sin(2 * np.pi * 0.7 * t) + 10.0 * np.sin(2 * np.pi * 2.3 * t)
    phase = 2 * np.pi * np.cumsum(f0) / 16000.0
    sig = sum((0.5 / k) * np.sin(k * phase) for k in range(1, 6))
    sig = 0.5 * sig / np.abs(sig).max() + 0.01 * rng.standard_normal(n)
    return sig.astype(np.float32)
