import base64
import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
import pytest

from morphtraj.audio import clip_from_wav_bytes, wav_bytes
from morphtraj.backends import (
    AdditiveSineBackend,
    BackendError,
    CrossfadeBackend,
    LinearMelBackend,
    RemoteBackend,
    WarpedBackend,
    build_backend,
    parse_backend,
)
from morphtraj.features import spectral_centroid
from morphtraj.spdp import FeatureExtractor, spdp, spdp_from_matrices

from conftest import SR, sine_clip


def oracle_p0(backend, pair, alpha):
    ex = FeatureExtractor(*pair)
    return spdp_from_matrices(ex.from_mel(backend.morph_features(alpha)), ex.m0, ex.m1).p[0]


# --- linear-mel ---------------------------------------------------------------


def test_linear_mel_oracle_endpoints(sine_noise_pair):
    backend = LinearMelBackend(sine_noise_pair)
    assert oracle_p0(backend, sine_noise_pair, 0.0) == 0.0
    assert oracle_p0(backend, sine_noise_pair, 1.0) == 1.0


def test_linear_mel_oracle_midpoint(sine_noise_pair):
    backend = LinearMelBackend(sine_noise_pair)
    assert oracle_p0(backend, sine_noise_pair, 0.5) == pytest.approx(0.5, abs=1e-12)


def test_linear_mel_oracle_exact_over_random_alphas(sine_noise_pair):
    backend = LinearMelBackend(sine_noise_pair)
    rng = np.random.default_rng(0)
    for alpha in rng.uniform(0, 1, 25):
        assert abs(oracle_p0(backend, sine_noise_pair, alpha) - alpha) < 1e-9


def test_linear_mel_monotone_grid(sine_noise_pair):
    backend = LinearMelBackend(sine_noise_pair)
    ps = [oracle_p0(backend, sine_noise_pair, a) for a in np.linspace(0, 1, 11)]
    assert np.all(np.diff(ps) > 0)


def test_linear_mel_audio_lands_near_mel_target(two_sine_pair):
    # production audio approximates the interpolated mel; endpoints are closest
    backend = LinearMelBackend(two_sine_pair)
    clip = backend.morph(0.0)
    p = spdp(clip, *two_sine_pair)
    assert p.p[0] < 0.15
    assert len(clip) == len(two_sine_pair[0])


def test_backend_determinism(sine_noise_pair):
    backend = LinearMelBackend(sine_noise_pair)
    a = backend.morph(0.37)
    b = backend.morph(0.37)
    assert np.array_equal(a.samples, b.samples)


def test_alpha_range_validated(sine_noise_pair):
    backend = LinearMelBackend(sine_noise_pair)
    with pytest.raises(ValueError):
        backend.morph(1.5)
    with pytest.raises(ValueError):
        backend.morph_features(-0.1)


# --- warped ---------------------------------------------------------------------


def test_warped_exponent_one_matches_linear(sine_noise_pair):
    lin = LinearMelBackend(sine_noise_pair)
    warp = WarpedBackend(sine_noise_pair, 1.0)
    for alpha in (0.2, 0.6):
        assert np.allclose(warp.morph_features(alpha), lin.morph_features(alpha))


def test_warped_effective_blend(sine_noise_pair):
    warp = WarpedBackend(sine_noise_pair, 3.0)
    assert oracle_p0(warp, sine_noise_pair, 0.7937005259840998) == pytest.approx(0.5, abs=1e-9)


def test_warped_uniform_grid_is_nonuniform(sine_noise_pair):
    warp = WarpedBackend(sine_noise_pair, 3.0)
    ps = np.array([oracle_p0(warp, sine_noise_pair, a) for a in np.linspace(0, 1, 5)])
    increments = np.diff(ps)
    assert increments == pytest.approx([0.015625, 0.109375, 0.296875, 0.578125], abs=1e-9)
    assert increments.std() > 0.2


def test_warped_rejects_nonpositive_exponent(sine_noise_pair):
    with pytest.raises(ValueError):
        WarpedBackend(sine_noise_pair, 0.0)


# --- crossfade --------------------------------------------------------------------


def test_crossfade_endpoint_bit_exact(two_sine_pair):
    backend = CrossfadeBackend(two_sine_pair)
    assert np.array_equal(backend.morph(0.0).samples, two_sine_pair[0].samples)
    assert np.array_equal(backend.morph(1.0).samples, two_sine_pair[1].samples)


def test_crossfade_cancellation():
    clip = sine_clip(440.0)
    anti = sine_clip(440.0, phase=np.pi)
    backend = CrossfadeBackend((clip, anti))
    assert np.allclose(backend.morph(0.5).samples, 0.0, atol=1e-12)


def test_crossfade_spdp_not_alpha(two_sine_pair):
    backend = CrossfadeBackend(two_sine_pair)
    p = spdp(backend.morph(0.5), *two_sine_pair)
    assert abs(p.p[0] - 0.5) > 0.02  # log compression breaks collinearity
    assert backend.morph_features(0.5) is None


# --- additive sine -----------------------------------------------------------------


def test_additive_endpoints_exact():
    backend = AdditiveSineBackend([(300.0, 0.5)], [(600.0, 0.5)])
    assert np.array_equal(backend.morph(0.0).samples, backend.pair[0].samples)
    assert np.array_equal(backend.morph(1.0).samples, backend.pair[1].samples)


def test_additive_midpoint_centroid():
    backend = AdditiveSineBackend([(300.0, 0.5)], [(600.0, 0.5)])
    centroid = spectral_centroid(backend.morph(0.5)).mean()
    assert abs(centroid - 450.0) <= 10.0


def test_additive_amplitude_lerp():
    backend = AdditiveSineBackend([(440.0, 0.2)], [(440.0, 0.8)])
    for alpha in (0.0, 0.25, 0.75, 1.0):
        peak = np.max(np.abs(backend.morph(alpha).samples))
        want = (1 - alpha) * 0.2 + alpha * 0.8
        assert abs(peak - want) <= 0.05 * want


def test_additive_partial_count_mismatch():
    with pytest.raises(ValueError):
        AdditiveSineBackend([(300.0, 1.0)], [(600.0, 1.0), (900.0, 0.5)])


# --- descriptor parsing --------------------------------------------------------------


def test_parse_backend_forms():
    assert parse_backend("linear-mel").kind == "linear-mel"
    assert parse_backend("crossfade").kind == "crossfade"
    warped = parse_backend("warped:3")
    assert warped.kind == "warped" and warped.params["exponent"] == 3.0
    remote = parse_backend("remote:http://host:9")
    assert remote.params["endpoint"] == "http://host:9"
    add = parse_backend("additive-sine:300:1+450:0.5>600:1+900:0.5")
    assert add.params["partials0"] == [(300.0, 1.0), (450.0, 0.5)]
    assert add.params["partials1"] == [(600.0, 1.0), (900.0, 0.5)]
    for bad in ("warped", "remote", "additive-sine:300:1", "nope"):
        with pytest.raises(ValueError):
            parse_backend(bad)


def test_build_backend_dispatch(sine_noise_pair):
    assert isinstance(build_backend(parse_backend("linear-mel"), sine_noise_pair), LinearMelBackend)
    assert isinstance(build_backend(parse_backend("warped:2"), sine_noise_pair), WarpedBackend)
    assert isinstance(build_backend(parse_backend("crossfade"), sine_noise_pair), CrossfadeBackend)


# --- remote client ----------------------------------------------------------------


class StubHandler(BaseHTTPRequestHandler):
    """Minimal protocol stub: registers one pair, echoes a fixed clip."""

    morph_calls = 0
    fail_morph = False

    def log_message(self, *args):
        pass

    def _reply(self, code, payload):
        body = json.dumps(payload).encode()
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_POST(self):
        length = int(self.headers["Content-Length"])
        request = json.loads(self.rfile.read(length))
        if self.path == "/pairs":
            assert "source_wav_b64" in request and "target_wav_b64" in request
            self._reply(200, {"pair_id": "stub-1"})
        elif self.path == "/morph":
            type(self).morph_calls += 1
            if type(self).fail_morph:
                self._reply(500, {"error": "synthetic failure"})
                return
            clip = sine_clip(200.0 + 400.0 * request["alpha"], duration_s=0.2)
            self._reply(200, {"wav_b64": base64.b64encode(wav_bytes(clip)).decode(),
                              "sample_rate": SR})
        else:
            self._reply(404, {"error": "no such route"})

    def do_GET(self):
        if self.path == "/health":
            self._reply(200, {"status": "ok", "model_id": "stub"})
        else:
            self._reply(404, {"error": "no such route"})


@pytest.fixture()
def stub_server():
    StubHandler.morph_calls = 0
    StubHandler.fail_morph = False
    server = HTTPServer(("127.0.0.1", 0), StubHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}"
    server.shutdown()
    thread.join()


def test_remote_backend_flow(stub_server, tmp_path, two_sine_pair):
    backend = RemoteBackend(stub_server, two_sine_pair, init_prompt="a tone", cache_dir=tmp_path)
    assert backend.pair_id == "stub-1"
    assert backend.health()["status"] == "ok"
    first = backend.morph(0.5)
    again = backend.morph(0.5)
    assert StubHandler.morph_calls == 1  # second hit served from disk cache
    assert np.array_equal(first.samples, again.samples)
    cache_file = tmp_path / "stub-1" / f"a{500000:07d}.wav"
    assert cache_file.exists()
    assert np.array_equal(clip_from_wav_bytes(cache_file.read_bytes()).samples, first.samples)


def test_remote_service_error_surfaced(stub_server, tmp_path, two_sine_pair):
    backend = RemoteBackend(stub_server, two_sine_pair, cache_dir=tmp_path)
    StubHandler.fail_morph = True
    with pytest.raises(BackendError, match="synthetic failure"):
        backend.morph(0.25)
    assert not any(tmp_path.rglob("*.wav"))  # no partial cache entry


def test_remote_unreachable(tmp_path, two_sine_pair):
    with pytest.raises(BackendError, match="transport"):
        RemoteBackend("http://127.0.0.1:1", two_sine_pair, cache_dir=tmp_path)
    assert not any(tmp_path.rglob("*"))
