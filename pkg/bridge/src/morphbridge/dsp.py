"""Audio <-> latent codec for the bridge.

The latent space is a standardized log-mel matrix: analysis mirrors the
conventions morph clients use (16 kHz, 1024-point FFT, 160 hop, 64 mel
bands, natural log, 1e-5 power floor), and decoding estimates linear
magnitudes from mel powers (least-squares through the filterbank) followed
by iterative phase reconstruction.
"""

from __future__ import annotations

import base64
import io

import numpy as np
from scipy.io import wavfile
from scipy.signal import get_window, resample_poly

SAMPLE_RATE = 16000
N_FFT = 1024
HOP = 160
N_MELS = 64
FMAX = 8000.0
LOG_FLOOR = 1e-5

# standardization constants for the latent (log-mel values span roughly
# [ln(1e-5), 3] ~= [-11.5, 3])
LATENT_MEAN = -5.0
LATENT_SCALE = 3.0


def decode_wav_b64(payload: str) -> np.ndarray:
    """Base64 WAV -> mono float samples at the service rate."""
    try:
        raw = base64.b64decode(payload, validate=True)
        rate, data = wavfile.read(io.BytesIO(raw))
    except Exception as exc:
        raise ValueError(f"undecodable WAV payload: {exc}") from exc
    if data.size == 0:
        raise ValueError("zero-length audio")
    if data.dtype == np.int16:
        x = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        x = data.astype(np.float64) / 2147483648.0
    elif data.dtype == np.uint8:
        x = (data.astype(np.float64) - 128.0) / 128.0
    elif data.dtype in (np.float32, np.float64):
        x = np.clip(data.astype(np.float64), -1.0, 1.0)
    else:
        raise ValueError(f"unsupported WAV sample format: {data.dtype}")
    if x.ndim == 2:
        if x.shape[1] > 2:
            raise ValueError("only mono/stereo accepted")
        x = x.mean(axis=1)
    if rate != SAMPLE_RATE:
        from fractions import Fraction

        ratio = Fraction(SAMPLE_RATE, int(rate))
        x = resample_poly(x, ratio.numerator, ratio.denominator)
    return np.clip(x, -1.0, 1.0)


def encode_wav_b64(samples: np.ndarray) -> str:
    q = np.clip(np.round(samples * 32768.0), -32768, 32767).astype(np.int16)
    buf = io.BytesIO()
    wavfile.write(buf, SAMPLE_RATE, q)
    return base64.b64encode(buf.getvalue()).decode("ascii")


def _window() -> np.ndarray:
    return get_window("hann", N_FFT, fftbins=True)


def stft_mag(x: np.ndarray) -> np.ndarray:
    if x.size < N_FFT:
        raise ValueError("clip shorter than one analysis window")
    n_frames = (x.size - N_FFT) // HOP + 1
    idx = np.arange(N_FFT)[None, :] + HOP * np.arange(n_frames)[:, None]
    return np.abs(np.fft.rfft(x[idx] * _window(), axis=1))


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank() -> np.ndarray:
    freqs = np.fft.rfftfreq(N_FFT, 1.0 / SAMPLE_RATE)
    pts = np.linspace(_hz_to_mel(0.0), _hz_to_mel(FMAX), N_MELS + 2)
    mel_f = _hz_to_mel(freqs)
    lower = (mel_f[None, :] - pts[:-2, None]) / np.diff(pts)[:-1, None]
    upper = (pts[2:, None] - mel_f[None, :]) / np.diff(pts)[1:, None]
    return np.maximum(0.0, np.minimum(lower, upper))


_FB = mel_filterbank()
# least-squares right inverse: FB @ PINV = I (64x64), so mel-consistent
# magnitude estimates reproduce the target mel powers exactly before clipping
_FB_PINV = _FB.T @ np.linalg.inv(_FB @ _FB.T)


def log_mel(x: np.ndarray) -> np.ndarray:
    power = stft_mag(x) ** 2
    return np.log(np.maximum(power @ _FB.T, LOG_FLOOR))


def encode_latent(x: np.ndarray) -> np.ndarray:
    """Audio -> standardized log-mel latent (frames, n_mels)."""
    return (log_mel(x) - LATENT_MEAN) / LATENT_SCALE


def _istft(spec: np.ndarray, length: int) -> np.ndarray:
    frames = np.fft.irfft(spec, n=N_FFT, axis=1)
    win = _window()
    n_out = (frames.shape[0] - 1) * HOP + N_FFT
    out = np.zeros(n_out)
    norm = np.zeros(n_out)
    for i in range(frames.shape[0]):
        s = i * HOP
        out[s : s + N_FFT] += frames[i] * win
        norm[s : s + N_FFT] += win**2
    out = np.where(norm > 1e-12, out / np.maximum(norm, 1e-12), 0.0)
    return out[:length] if length <= n_out else np.pad(out, (0, length - n_out))


def decode_latent(z: np.ndarray, length: int, gl_iters: int = 48) -> np.ndarray:
    """Standardized latent -> audio via magnitude estimation + phase recovery."""
    mel_power = np.exp(z * LATENT_SCALE + LATENT_MEAN)
    lin_power = np.maximum(mel_power @ _FB_PINV.T, 0.0)
    mag = np.sqrt(lin_power)
    spec = mag.astype(np.complex128)
    for _ in range(gl_iters):
        x = _istft(spec, length)
        n_frames = (length - N_FFT) // HOP + 1
        idx = np.arange(N_FFT)[None, :] + HOP * np.arange(n_frames)[:, None]
        phase = np.angle(np.fft.rfft(x[idx] * _window(), axis=1))
        if phase.shape[0] < mag.shape[0]:
            phase = np.pad(phase, ((0, mag.shape[0] - phase.shape[0]), (0, 0)))
        spec = mag * np.exp(1j * phase[: mag.shape[0]])
    return np.clip(_istft(spec, length), -1.0, 1.0)


def spdp_p0(x_alpha: np.ndarray, x0: np.ndarray, x1: np.ndarray) -> float:
    """First distance-proportion component over log-mel (diagnostics/tests)."""
    n = min(x_alpha.size, x0.size, x1.size)
    ma, m0, m1 = log_mel(x_alpha[:n]), log_mel(x0[:n]), log_mel(x1[:n])
    d0 = np.linalg.norm(ma - m0)
    d1 = np.linalg.norm(ma - m1)
    return float(d0 / (d0 + d1))
