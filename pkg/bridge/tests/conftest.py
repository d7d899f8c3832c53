import base64
import io

import numpy as np
import pytest
from scipy.io import wavfile
from scipy.signal import lfilter

SR = 16000

# small option set for protocol tests where generation quality is irrelevant
FAST_OPTS = {"t_inv": 20, "t_adapt": 10, "t_bias": 2, "ddim_steps": 8, "seed": 7}


def wav_b64(x: np.ndarray, rate: int = SR) -> str:
    q = np.clip(np.round(x * 32768.0), -32768, 32767).astype(np.int16)
    buf = io.BytesIO()
    wavfile.write(buf, rate, q)
    return base64.b64encode(buf.getvalue()).decode("ascii")


def decode_b64_wav(payload: str) -> np.ndarray:
    rate, data = wavfile.read(io.BytesIO(base64.b64decode(payload)))
    return data.astype(np.float64) / 32768.0


def texture_pair(duration_s=1.0):
    """Two clearly different broadband textures (a 'real' audio pair)."""
    n = int(SR * duration_s)
    rng = np.random.default_rng(0)
    low = lfilter([1.0], [1.0, -0.9], rng.standard_normal(n))
    low = np.clip(0.4 * low / np.max(np.abs(low)), -1, 1)
    white = np.clip(0.3 * rng.standard_normal(n), -1, 1)
    return low, white


@pytest.fixture(scope="session")
def fast_client(tmp_path_factory):
    from fastapi.testclient import TestClient

    from morphbridge.service import create_app

    sessions = tmp_path_factory.mktemp("sessions")
    app = create_app(sessions)
    with TestClient(app, raise_server_exceptions=False) as client:
        client.session_dir = sessions
        yield client


@pytest.fixture(scope="session")
def registered_pair(fast_client):
    x0, x1 = texture_pair(0.3)
    body = {
        "source_wav_b64": wav_b64(x0),
        "target_wav_b64": wav_b64(x1),
        "init_prompt": "noise textures",
        "opt": FAST_OPTS,
    }
    reply = fast_client.post("/pairs", json=body)
    assert reply.status_code == 200, reply.text
    return body, reply.json()["pair_id"], (x0, x1)
