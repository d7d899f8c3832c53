import numpy as np
import pytest

from morphtraj.audio import AudioClip, prepare_pair

SR = 16000


def sine_clip(freq_hz=440.0, amp=0.6, duration_s=1.0, rate=SR, phase=0.0):
    t = np.arange(int(round(duration_s * rate))) / rate
    return AudioClip(amp * np.sin(2 * np.pi * freq_hz * t + phase), rate)


def noise_clip(seed=0, amp=0.3, duration_s=1.0, rate=SR):
    rng = np.random.default_rng(seed)
    x = amp * rng.standard_normal(int(round(duration_s * rate)))
    return AudioClip(np.clip(x, -1.0, 1.0), rate)


def silence_clip(duration_s=1.0, rate=SR):
    return AudioClip(np.zeros(int(round(duration_s * rate))), rate)


@pytest.fixture(scope="session")
def sine_noise_pair():
    """A clearly-separated prepared pair used across search tests."""
    return prepare_pair(sine_clip(440.0), noise_clip(seed=1))


@pytest.fixture(scope="session")
def two_sine_pair():
    return prepare_pair(sine_clip(300.0), sine_clip(1200.0))
