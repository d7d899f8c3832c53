"""WAV loading, resampling, pair preparation, and writing.

Everything downstream consumes the mono ``AudioClip`` produced here. The
canonical internal rate is 16 kHz; analysis modules assume a pair has been
through :func:`prepare_pair` so both clips share rate and length.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

CANONICAL_RATE_HZ = 16000

# 16-bit write uses round(x * 32768) clipped to the int16 range: error stays
# within half an LSB everywhere except exactly at +1.0, where it is one LSB.
_PCM16_FULL_SCALE = 32768.0


@dataclass(frozen=True)
class AudioClip:
    """Mono PCM samples (float64 in [-1, 1]) at a fixed sample rate.

    Samples are copied and frozen on construction, so clips are safe to
    share across threads.
    """

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError("clip samples must be a 1-D mono array")
        if samples.size == 0:
            raise ValueError("clip has zero length")
        if not np.all(np.isfinite(samples)):
            raise ValueError("clip contains non-finite samples")
        if int(self.sample_rate) <= 0:
            raise ValueError("sample rate must be positive")
        samples = samples.copy()
        samples.flags.writeable = False
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate


def _decode_pcm(data: np.ndarray) -> np.ndarray:
    """Scale raw WAV sample values to float64 in [-1, 1]."""
    kind = data.dtype
    if kind == np.uint8:
        return (data.astype(np.float64) - 128.0) / 128.0
    if kind == np.int16:
        return data.astype(np.float64) / 32768.0
    if kind == np.int32:
        # 24-bit PCM arrives left-justified in int32, so one divisor covers both.
        return data.astype(np.float64) / 2147483648.0
    if kind in (np.float32, np.float64):
        return np.clip(data.astype(np.float64), -1.0, 1.0)
    raise ValueError(f"unsupported WAV sample format: {kind}")


def load_wav(path) -> AudioClip:
    """Read a RIFF/WAVE PCM file as a mono clip scaled to [-1, 1].

    Accepts 8/16/24/32-bit integer and 32-bit float PCM with 1-2 channels;
    stereo is averaged down to mono.
    """
    try:
        rate, data = wavfile.read(path)
    except Exception as exc:
        raise ValueError(f"cannot read WAV file {path}: {exc}") from exc
    if data.size == 0:
        raise ValueError(f"zero-length audio: {path}")
    samples = _decode_pcm(data)
    if samples.ndim == 2:
        if samples.shape[1] > 2:
            raise ValueError(f"only mono/stereo supported, got {samples.shape[1]} channels")
        samples = samples.mean(axis=1)
    return AudioClip(samples, rate)


def write_wav(clip: AudioClip, path) -> None:
    """Write a clip as 16-bit PCM mono WAV (little-endian)."""
    q = np.clip(np.round(clip.samples * _PCM16_FULL_SCALE), -32768, 32767)
    wavfile.write(path, clip.sample_rate, q.astype(np.int16))


def wav_bytes(clip: AudioClip) -> bytes:
    """16-bit PCM WAV file content in memory (for wire transport)."""
    buf = io.BytesIO()
    write_wav(clip, buf)
    return buf.getvalue()


def clip_from_wav_bytes(data: bytes) -> AudioClip:
    """Inverse of :func:`wav_bytes`; accepts any format load_wav accepts."""
    return load_wav(io.BytesIO(data))


def normalize_peak(clip: AudioClip, peak: float = 1.0) -> AudioClip:
    """Scale so the largest magnitude hits ``peak``. Not applied anywhere by
    default: metrics must see raw levels."""
    if not 0 < peak <= 1.0:
        raise ValueError("peak must be in (0, 1]")
    top = float(np.max(np.abs(clip.samples)))
    if top == 0.0:
        return clip
    return AudioClip(clip.samples * (peak / top), clip.sample_rate)


def resample(clip: AudioClip, target_rate_hz: int, window=("kaiser", 5.0)) -> AudioClip:
    """Band-limited polyphase resampling to ``target_rate_hz``.

    ``window`` is passed through to the FIR design and acts as the quality
    knob (longer/steeper windows give a sharper anti-alias filter).
    """
    if target_rate_hz <= 0:
        raise ValueError("target rate must be positive")
    if target_rate_hz == clip.sample_rate:
        return clip
    ratio = Fraction(int(target_rate_hz), clip.sample_rate)
    out = resample_poly(clip.samples, ratio.numerator, ratio.denominator, window=window)
    return AudioClip(np.clip(out, -1.0, 1.0), target_rate_hz)


def prepare_pair(
    a: AudioClip,
    b: AudioClip,
    policy: str = "pad",
    rate_hz: int = CANONICAL_RATE_HZ,
) -> tuple[AudioClip, AudioClip]:
    """Bring two clips to a common rate and length.

    policy "pad" extends the shorter clip with trailing silence;
    "truncate" cuts both to the shorter length. Idempotent.
    """
    if policy not in ("pad", "truncate"):
        raise ValueError(f"unknown length policy: {policy!r}")
    a = resample(a, rate_hz)
    b = resample(b, rate_hz)
    if len(a) == len(b):
        return a, b
    if policy == "truncate":
        n = min(len(a), len(b))
        return AudioClip(a.samples[:n], rate_hz), AudioClip(b.samples[:n], rate_hz)
    n = max(len(a), len(b))
    pad = lambda c: AudioClip(np.pad(c.samples, (0, n - len(c))), rate_hz)
    return pad(a), pad(b)
