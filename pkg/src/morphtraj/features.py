"""Frame-based spectral features: STFT, log-mel, MFCC, timbre descriptors.

Analysis uses no center padding, so the frame count is
``floor((len - n_fft) / hop) + 1`` and equal-length clips always produce
equal-shape matrices -- the property the distance-proportion search relies
on. The log-mel uses a natural log with an absolute power floor; MFCCs are
an orthonormal DCT-II of the log-mel.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy.fft import dct
from scipy.signal import get_window

from morphtraj.audio import AudioClip


@dataclass(frozen=True)
class StftConfig:
    """Analysis parameters shared by all frame-based features."""

    n_fft: int = 1024
    hop: int = 160
    window: str = "hann"
    n_mels: int = 64
    fmin_hz: float = 0.0
    fmax_hz: float = 8000.0
    log_floor: float = 1e-5

    def __post_init__(self):
        if self.n_fft <= 0 or self.n_fft & (self.n_fft - 1):
            raise ValueError("n_fft must be a positive power of two")
        if not 0 < self.hop <= self.n_fft:
            raise ValueError("hop must satisfy 0 < hop <= n_fft")
        if self.window != "hann":
            raise ValueError("only the hann window is supported")
        if self.n_mels <= 0:
            raise ValueError("n_mels must be positive")
        if not 0 <= self.fmin_hz < self.fmax_hz:
            raise ValueError("need 0 <= fmin < fmax")
        if self.log_floor <= 0:
            raise ValueError("log_floor must be positive")


@dataclass(frozen=True)
class LogMelSpectrogram:
    """Log-magnitude mel spectrogram, shape (time frames, n_mels)."""

    values: np.ndarray
    config: StftConfig


@dataclass(frozen=True)
class MfccMatrix:
    values: np.ndarray  # (time frames, n_coeffs)


@dataclass(frozen=True)
class TimbrePoint:
    """One clip's coordinates in the 3-D timbre space."""

    log_attack_time: float
    spectral_centroid: float
    spectral_flux: float

    def as_array(self) -> np.ndarray:
        return np.array([self.log_attack_time, self.spectral_centroid, self.spectral_flux])


# ---------------------------------------------------------------------------
# STFT and resynthesis
# ---------------------------------------------------------------------------


def frame_count(n_samples: int, cfg: StftConfig) -> int:
    if n_samples < cfg.n_fft:
        raise ValueError(f"clip shorter than one analysis window ({n_samples} < {cfg.n_fft})")
    return (n_samples - cfg.n_fft) // cfg.hop + 1


def _stft_samples(x: np.ndarray, cfg: StftConfig) -> np.ndarray:
    n_frames = frame_count(x.size, cfg)
    win = get_window("hann", cfg.n_fft, fftbins=True)
    idx = np.arange(cfg.n_fft)[None, :] + cfg.hop * np.arange(n_frames)[:, None]
    return np.fft.rfft(x[idx] * win, axis=1)


def stft(clip: AudioClip, cfg: StftConfig = StftConfig()) -> np.ndarray:
    """Complex STFT, shape (frames, n_fft//2 + 1). No center padding."""
    return _stft_samples(clip.samples, cfg)


def istft(spec: np.ndarray, cfg: StftConfig = StftConfig(), length: int | None = None) -> np.ndarray:
    """Weighted overlap-add inverse of :func:`stft`."""
    frames = np.fft.irfft(spec, n=cfg.n_fft, axis=1)
    win = get_window("hann", cfg.n_fft, fftbins=True)
    n_frames = frames.shape[0]
    n_out = (n_frames - 1) * cfg.hop + cfg.n_fft
    out = np.zeros(n_out)
    norm = np.zeros(n_out)
    for i in range(n_frames):
        s = i * cfg.hop
        out[s : s + cfg.n_fft] += frames[i] * win
        norm[s : s + cfg.n_fft] += win**2
    out = np.where(norm > 1e-12, out / np.maximum(norm, 1e-12), 0.0)
    if length is not None:
        if length <= n_out:
            out = out[:length]
        else:
            out = np.pad(out, (0, length - n_out))
    return out


def griffin_lim(
    magnitude: np.ndarray,
    cfg: StftConfig = StftConfig(),
    n_iters: int = 32,
    length: int | None = None,
) -> np.ndarray:
    """Phase reconstruction by iterative STFT-consistency projection.

    Deterministic (zero-phase init); the result is approximate, with the
    residual shrinking as ``n_iters`` grows.
    """
    spec = magnitude.astype(np.complex128)
    target_len = length if length is not None else (magnitude.shape[0] - 1) * cfg.hop + cfg.n_fft
    for _ in range(n_iters):
        x = istft(spec, cfg, length=target_len)
        phase = np.angle(_stft_samples(x, cfg)[: magnitude.shape[0]])
        if phase.shape[0] < magnitude.shape[0]:
            phase = np.pad(phase, ((0, magnitude.shape[0] - phase.shape[0]), (0, 0)))
        spec = magnitude * np.exp(1j * phase)
    return istft(spec, cfg, length=target_len)


# ---------------------------------------------------------------------------
# Mel filterbank and log-mel
# ---------------------------------------------------------------------------


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(cfg: StftConfig, sample_rate: int) -> np.ndarray:
    """Unit-peak triangular filters, shape (n_mels, n_fft//2 + 1).

    Triangles are linear in mel, so each FFT column sums to at most 1.
    """
    if cfg.fmax_hz > sample_rate / 2 + 1e-9:
        raise ValueError("fmax above Nyquist")
    freqs = np.fft.rfftfreq(cfg.n_fft, 1.0 / sample_rate)
    mel_pts = np.linspace(_hz_to_mel(cfg.fmin_hz), _hz_to_mel(cfg.fmax_hz), cfg.n_mels + 2)
    mel_f = _hz_to_mel(freqs)
    lower = (mel_f[None, :] - mel_pts[:-2, None]) / np.diff(mel_pts)[:-1, None]
    upper = (mel_pts[2:, None] - mel_f[None, :]) / np.diff(mel_pts)[1:, None]
    return np.maximum(0.0, np.minimum(lower, upper))


def mel_center_frequencies(cfg: StftConfig) -> np.ndarray:
    """Center frequency (Hz) of each mel filter; strictly increasing."""
    mel_pts = np.linspace(_hz_to_mel(cfg.fmin_hz), _hz_to_mel(cfg.fmax_hz), cfg.n_mels + 2)
    return _mel_to_hz(mel_pts[1:-1])


def log_mel(clip: AudioClip, cfg: StftConfig = StftConfig()) -> LogMelSpectrogram:
    """Natural-log mel power spectrogram, floored at ``cfg.log_floor``."""
    power = np.abs(stft(clip, cfg)) ** 2
    mel_power = power @ mel_filterbank(cfg, clip.sample_rate).T
    return LogMelSpectrogram(np.log(np.maximum(mel_power, cfg.log_floor)), cfg)


def mfcc(mel, n_coeffs: int = 13) -> MfccMatrix:
    """First ``n_coeffs`` coefficients of an orthonormal DCT-II over mel bands.

    Accepts a LogMelSpectrogram or a raw (frames, n_mels) array.
    """
    values = mel.values if isinstance(mel, LogMelSpectrogram) else np.asarray(mel)
    if n_coeffs > values.shape[1]:
        raise ValueError("n_coeffs exceeds number of mel bands")
    return MfccMatrix(dct(values, type=2, norm="ortho", axis=1)[:, :n_coeffs])


# ---------------------------------------------------------------------------
# Descriptors
# ---------------------------------------------------------------------------


def spectral_centroid(clip: AudioClip, cfg: StftConfig = StftConfig()) -> np.ndarray:
    """Per-frame magnitude-weighted mean frequency; 0 for empty frames."""
    mag = np.abs(stft(clip, cfg))
    freqs = np.fft.rfftfreq(cfg.n_fft, 1.0 / clip.sample_rate)
    total = mag.sum(axis=1)
    weighted = mag @ freqs
    return np.where(total > 0, weighted / np.maximum(total, 1e-300), 0.0)


def spectral_flux(clip: AudioClip, cfg: StftConfig = StftConfig()) -> np.ndarray:
    """Per-transition L2 change of the unit-normalized magnitude spectrum.

    Returns frames-1 values; a zero spectrum normalizes to the zero vector.
    """
    mag = np.abs(stft(clip, cfg))
    if mag.shape[0] < 2:
        raise ValueError("need at least 2 frames for spectral flux")
    norms = np.linalg.norm(mag, axis=1, keepdims=True)
    unit = np.where(norms > 0, mag / np.maximum(norms, 1e-300), 0.0)
    return np.linalg.norm(np.diff(unit, axis=0), axis=1)


def contrast_from_magnitude(
    mag: np.ndarray,
    freqs: np.ndarray,
    n_bands: int = 6,
    quantile: float = 0.02,
    band_start_hz: float = 200.0,
    floor: float = 1e-10,
) -> np.ndarray:
    """Peak-vs-valley log contrast per octave band over a magnitude matrix.

    Band k spans [start*2^k, start*2^(k+1)), with the last band clipped at
    the highest available frequency. Contrast is the mean log of the
    top-quantile bins minus that of the bottom-quantile bins.
    """
    if not 0 < quantile < 0.5:
        raise ValueError("quantile must be in (0, 0.5)")
    out = np.zeros((mag.shape[0], n_bands))
    for k in range(n_bands):
        lo = band_start_hz * 2.0**k
        hi = band_start_hz * 2.0 ** (k + 1)
        sel = (freqs >= lo) & (freqs < hi)
        if k == n_bands - 1:
            sel = (freqs >= lo) & (freqs <= freqs[-1])
        if not np.any(sel):
            continue
        sub = np.sort(np.log(np.maximum(mag[:, sel], floor)), axis=1)
        m = max(1, int(round(quantile * sub.shape[1])))
        out[:, k] = sub[:, -m:].mean(axis=1) - sub[:, :m].mean(axis=1)
    return out


def spectral_contrast(
    clip: AudioClip,
    cfg: StftConfig = StftConfig(),
    n_bands: int = 6,
    quantile: float = 0.02,
) -> np.ndarray:
    mag = np.abs(stft(clip, cfg))
    freqs = np.fft.rfftfreq(cfg.n_fft, 1.0 / clip.sample_rate)
    return contrast_from_magnitude(mag, freqs, n_bands=n_bands, quantile=quantile)


def log_attack_time(clip: AudioClip, env_hop_s: float = 0.01) -> float:
    """log10 of the 10%-to-90% rise time of the smoothed RMS envelope.

    The envelope uses non-overlapping ``env_hop_s`` windows and a 3-point
    moving average; the rise time is floored at one envelope hop so an
    instantaneous onset maps to log10(env_hop_s).
    """
    hop = max(1, int(round(clip.sample_rate * env_hop_s)))
    n_win = len(clip) // hop
    if n_win < 1:
        raise ValueError("clip too short for an attack envelope")
    x = clip.samples[: n_win * hop].reshape(n_win, hop)
    env = np.sqrt((x**2).mean(axis=1))
    if n_win >= 3:
        env = np.convolve(np.pad(env, 1, mode="edge"), np.ones(3) / 3.0, mode="valid")
    peak = env.max()
    if peak <= 0:
        raise ValueError("silent clip has no attack")
    t10 = int(np.argmax(env >= 0.1 * peak))
    t90 = int(np.argmax(env >= 0.9 * peak))
    rise_s = max((t90 - t10) * hop / clip.sample_rate, hop / clip.sample_rate)
    return float(np.log10(rise_s))


def timbre_point(clip: AudioClip, cfg: StftConfig = StftConfig()) -> TimbrePoint:
    """LAT / mean centroid / mean flux triple for one clip."""
    return TimbrePoint(
        log_attack_time=log_attack_time(clip),
        spectral_centroid=float(spectral_centroid(clip, cfg).mean()),
        spectral_flux=float(spectral_flux(clip, cfg).mean()),
    )


# ---------------------------------------------------------------------------
# PCA reduction of mel spectrograms
# ---------------------------------------------------------------------------


class MelPca:
    """PCA basis fitted on the union of frames of a set of mel spectrograms.

    The sign of each axis is fixed (largest-magnitude loading positive) so
    the basis is deterministic given the input.
    """

    def __init__(self, mels, n_components: int):
        mats = [m.values if isinstance(m, LogMelSpectrogram) else np.asarray(m) for m in mels]
        dims = {m.shape[1] for m in mats}
        if len(dims) != 1:
            raise ValueError("all spectrograms must share the mel dimension")
        frames = np.vstack(mats)
        self.mean = frames.mean(axis=0)
        _, s, vt = np.linalg.svd(frames - self.mean, full_matrices=False)
        tol = max(frames.shape) * np.finfo(float).eps * (s[0] if s.size else 0.0)
        rank = int(np.sum(s > tol))
        if n_components > rank:
            raise ValueError(f"n_components={n_components} exceeds data rank {rank}")
        comps = vt[:n_components]
        for i in range(comps.shape[0]):
            j = int(np.argmax(np.abs(comps[i])))
            if comps[i, j] < 0:
                comps[i] = -comps[i]
        self.components = comps

    def transform(self, mel) -> np.ndarray:
        values = mel.values if isinstance(mel, LogMelSpectrogram) else np.asarray(mel)
        return (values - self.mean) @ self.components.T


def pca_reduce_mel(mels, n_components: int) -> list[np.ndarray]:
    """Project each spectrogram onto the top axes of a jointly fitted basis."""
    pca = MelPca(mels, n_components)
    return [pca.transform(m) for m in mels]


# ---------------------------------------------------------------------------
# Matrix export: .mat binary and PGM images
# ---------------------------------------------------------------------------


def write_mat(matrix: np.ndarray, path) -> None:
    """Little-endian f32 dump with an 8-byte (rows, cols) u32 header."""
    m = np.asarray(matrix, dtype="<f4")
    if m.ndim != 2:
        raise ValueError("write_mat expects a 2-D matrix")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<II", m.shape[0], m.shape[1]))
        fh.write(np.ascontiguousarray(m).tobytes())


def read_mat(path) -> np.ndarray:
    with open(path, "rb") as fh:
        rows, cols = struct.unpack("<II", fh.read(8))
        data = np.frombuffer(fh.read(), dtype="<f4")
    if data.size != rows * cols:
        raise ValueError("truncated .mat payload")
    return data.reshape(rows, cols).astype(np.float64)


def pgm_bytes(matrix: np.ndarray) -> bytes:
    """8-bit P5 image of a (time, bins) matrix.

    Time runs along x; low bins sit at the bottom. Values are min-max
    scaled per matrix (a constant matrix renders as black).
    """
    m = np.asarray(matrix, dtype=np.float64)
    img = m.T[::-1, :]
    lo, hi = img.min(), img.max()
    if hi > lo:
        img = (img - lo) / (hi - lo) * 255.0
    else:
        img = np.zeros_like(img)
    pixels = img.round().astype(np.uint8)
    header = f"P5\n{pixels.shape[1]} {pixels.shape[0]}\n255\n".encode("ascii")
    return header + pixels.tobytes()


def write_pgm(matrix: np.ndarray, path) -> None:
    with open(path, "wb") as fh:
        fh.write(pgm_bytes(matrix))
