"""Morph generators: the M(alpha) contract, synthetic test backends, and
an HTTP client for remote diffusion services.

Every backend is deterministic for a fixed (pair, alpha). The synthetic
linear-mel family additionally exposes its interpolated log-mel matrix
directly (``morph_features``), so the factor search can score candidates
in feature space without the error injected by phase reconstruction;
``morph`` always returns audio.
"""

from __future__ import annotations

import base64
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import requests

from morphtraj.audio import AudioClip, clip_from_wav_bytes, wav_bytes
from morphtraj.features import StftConfig, griffin_lim, log_mel, stft

_MAG_EPS = 1e-8


class BackendError(RuntimeError):
    """Remote generation failed (transport or service-reported)."""


class MorphBackend(ABC):
    """Deterministic morph generator over a registered clip pair."""

    pair: tuple[AudioClip, AudioClip]

    @abstractmethod
    def morph(self, alpha: float) -> AudioClip:
        """Audio at morph factor alpha in [0, 1]."""

    def morph_features(self, alpha: float):
        """Log-mel-domain output when available without resynthesis, else None."""
        return None


def _check_alpha(alpha: float) -> float:
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"morph factor must be in [0, 1], got {alpha}")
    return float(alpha)


def _loglerp(a: np.ndarray, b: np.ndarray, alpha: float, eps: float = _MAG_EPS) -> np.ndarray:
    """Geometric interpolation of nonnegative matrices (linear in the log)."""
    return np.exp((1.0 - alpha) * np.log(a + eps) + alpha * np.log(b + eps)) - eps


class LinearMelBackend(MorphBackend):
    """Backend whose log-mel moves on the straight line between endpoints.

    Feature-space output is exact by construction; audio output geometric-
    interpolates the linear-frequency magnitudes and reconstructs phase
    iteratively, which is approximate.
    """

    def __init__(self, pair, stft_cfg: StftConfig = StftConfig(), gl_iters: int = 32, oracle: bool = True):
        self.pair = pair
        self.stft_cfg = stft_cfg
        self.gl_iters = gl_iters
        self.oracle = oracle
        self._mel0 = log_mel(pair[0], stft_cfg).values
        self._mel1 = log_mel(pair[1], stft_cfg).values
        self._mag0 = np.abs(stft(pair[0], stft_cfg))
        self._mag1 = np.abs(stft(pair[1], stft_cfg))

    def morph_features(self, alpha: float):
        if not self.oracle:
            return None
        alpha = _check_alpha(alpha)
        return (1.0 - alpha) * self._mel0 + alpha * self._mel1

    def morph(self, alpha: float) -> AudioClip:
        alpha = _check_alpha(alpha)
        mag = np.maximum(_loglerp(self._mag0, self._mag1, alpha), 0.0)
        x = griffin_lim(mag, self.stft_cfg, n_iters=self.gl_iters, length=len(self.pair[0]))
        return AudioClip(np.clip(x, -1.0, 1.0), self.pair[0].sample_rate)


class WarpedBackend(MorphBackend):
    """Linear-mel backend driven at the effective blend alpha**exponent.

    Gives the search a curve it must actually invert: the achieved
    proportion at factor alpha is alpha**exponent.
    """

    def __init__(self, pair, exponent: float, **kwargs):
        if exponent <= 0:
            raise ValueError("exponent must be positive")
        self.exponent = float(exponent)
        self._inner = LinearMelBackend(pair, **kwargs)
        self.pair = self._inner.pair

    def morph_features(self, alpha: float):
        return self._inner.morph_features(_check_alpha(alpha) ** self.exponent)

    def morph(self, alpha: float) -> AudioClip:
        return self._inner.morph(_check_alpha(alpha) ** self.exponent)


class CrossfadeBackend(MorphBackend):
    """Naive time-domain mixing baseline."""

    def __init__(self, pair):
        self.pair = pair

    def morph(self, alpha: float) -> AudioClip:
        alpha = _check_alpha(alpha)
        x = (1.0 - alpha) * self.pair[0].samples + alpha * self.pair[1].samples
        return AudioClip(np.clip(x, -1.0, 1.0), self.pair[0].sample_rate)


class AdditiveSineBackend(MorphBackend):
    """Miniature sinusoidal-model morphing: per-partial linear interpolation
    of frequency and amplitude."""

    def __init__(self, partials0, partials1, duration_s: float = 1.0, sample_rate: int = 16000):
        if len(partials0) != len(partials1):
            raise ValueError("partial counts must match")
        if not partials0:
            raise ValueError("need at least one partial")
        self.partials0 = [(float(f), float(a)) for f, a in partials0]
        self.partials1 = [(float(f), float(a)) for f, a in partials1]
        self.sample_rate = sample_rate
        self.n_samples = int(round(duration_s * sample_rate))
        self.pair = (self.morph(0.0), self.morph(1.0))

    def morph(self, alpha: float) -> AudioClip:
        alpha = _check_alpha(alpha)
        t = np.arange(self.n_samples) / self.sample_rate
        x = np.zeros(self.n_samples)
        for (f0, a0), (f1, a1) in zip(self.partials0, self.partials1):
            f = (1.0 - alpha) * f0 + alpha * f1
            a = (1.0 - alpha) * a0 + alpha * a1
            x += a * np.sin(2.0 * np.pi * f * t)
        return AudioClip(np.clip(x, -1.0, 1.0), self.sample_rate)


class RemoteBackend(MorphBackend):
    """Client for a generation service speaking the pair/morph protocol.

    The pair is uploaded once at construction; per-alpha results are cached
    on disk keyed by (pair_id, alpha quantized to 1e-6), since bisection
    revisits nearby factors and remote generation is expensive.
    """

    def __init__(self, endpoint: str, pair, init_prompt: str = "", opts: dict | None = None,
                 cache_dir=None, timeout_s: float = 600.0):
        self.endpoint = endpoint.rstrip("/")
        self.pair = pair
        self.timeout_s = timeout_s
        self.cache_dir = Path(cache_dir) if cache_dir else None
        payload = {
            "source_wav_b64": base64.b64encode(wav_bytes(pair[0])).decode("ascii"),
            "target_wav_b64": base64.b64encode(wav_bytes(pair[1])).decode("ascii"),
            "init_prompt": init_prompt,
            "opt": opts or {},
        }
        reply = self._post("/pairs", payload)
        try:
            self.pair_id = str(reply["pair_id"])
        except (KeyError, TypeError) as exc:
            raise BackendError(f"malformed /pairs response: {reply!r}") from exc

    def _post(self, route: str, payload: dict) -> dict:
        try:
            resp = requests.post(self.endpoint + route, json=payload, timeout=self.timeout_s)
        except requests.RequestException as exc:
            raise BackendError(f"transport failure for {route}: {exc}") from exc
        body = {}
        try:
            body = resp.json()
        except ValueError:
            pass
        if resp.status_code != 200:
            message = body.get("error") if isinstance(body, dict) else None
            raise BackendError(f"service error on {route} (HTTP {resp.status_code}): {message or resp.text[:200]}")
        if not isinstance(body, dict):
            raise BackendError(f"malformed payload from {route}")
        return body

    def _cache_path(self, alpha: float) -> Path | None:
        if self.cache_dir is None:
            return None
        key = int(round(alpha * 1e6))
        return self.cache_dir / self.pair_id / f"a{key:07d}.wav"

    def morph(self, alpha: float) -> AudioClip:
        alpha = _check_alpha(alpha)
        path = self._cache_path(alpha)
        if path is not None and path.exists():
            return clip_from_wav_bytes(path.read_bytes())
        reply = self._post("/morph", {"pair_id": self.pair_id, "alpha": alpha})
        try:
            data = base64.b64decode(reply["wav_b64"])
        except (KeyError, TypeError, ValueError) as exc:
            raise BackendError(f"malformed /morph response: {reply!r}") from exc
        clip = clip_from_wav_bytes(data)  # validate before caching
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix(".tmp")
            tmp.write_bytes(data)
            tmp.replace(path)
        return clip

    def health(self) -> dict:
        try:
            resp = requests.get(self.endpoint + "/health", timeout=self.timeout_s)
            resp.raise_for_status()
            return resp.json()
        except (requests.RequestException, ValueError) as exc:
            raise BackendError(f"health check failed: {exc}") from exc


@dataclass(frozen=True)
class BackendDescriptor:
    """Parsed backend choice, e.g. from a CLI string."""

    kind: str
    params: dict = field(default_factory=dict)

    KINDS = ("linear-mel", "warped", "crossfade", "additive-sine", "remote")


def parse_backend(text: str) -> BackendDescriptor:
    """Parse strings like ``linear-mel``, ``warped:3``, ``remote:http://host``.

    ``additive-sine`` takes partial lists: ``additive-sine:300:1+450:0.5>600:1+900:0.5``
    (source partials ``freq:amp`` joined by ``+``, then ``>``, then target partials).
    """
    kind, _, rest = text.partition(":")
    if kind == "linear-mel":
        return BackendDescriptor("linear-mel")
    if kind == "crossfade":
        return BackendDescriptor("crossfade")
    if kind == "warped":
        if not rest:
            raise ValueError("warped backend needs an exponent, e.g. warped:3")
        return BackendDescriptor("warped", {"exponent": float(rest)})
    if kind == "remote":
        if not rest:
            raise ValueError("remote backend needs an endpoint URL, e.g. remote:http://host:8000")
        return BackendDescriptor("remote", {"endpoint": rest})
    if kind == "additive-sine":
        if not rest or ">" not in rest:
            raise ValueError("additive-sine needs 'src_partials>dst_partials'")
        src, dst = rest.split(">", 1)
        parse = lambda side: [tuple(map(float, p.split(":"))) for p in side.split("+")]
        return BackendDescriptor("additive-sine", {"partials0": parse(src), "partials1": parse(dst)})
    raise ValueError(f"unknown backend kind: {kind!r}")


def build_backend(desc: BackendDescriptor, pair, stft_cfg: StftConfig = StftConfig(),
                  prompt: str = "", opts: dict | None = None, cache_dir=None) -> MorphBackend:
    if desc.kind == "linear-mel":
        return LinearMelBackend(pair, stft_cfg)
    if desc.kind == "warped":
        return WarpedBackend(pair, desc.params["exponent"], stft_cfg=stft_cfg)
    if desc.kind == "crossfade":
        return CrossfadeBackend(pair)
    if desc.kind == "additive-sine":
        return AdditiveSineBackend(
            desc.params["partials0"], desc.params["partials1"],
            duration_s=len(pair[0]) / pair[0].sample_rate if pair else 1.0,
            sample_rate=pair[0].sample_rate if pair else 16000,
        )
    if desc.kind == "remote":
        return RemoteBackend(desc.params["endpoint"], pair, init_prompt=prompt,
                             opts=opts, cache_dir=cache_dir)
    raise ValueError(f"unknown backend kind: {desc.kind!r}")
