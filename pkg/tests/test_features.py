import numpy as np
import pytest
from scipy.fft import dct

from morphtraj.audio import AudioClip
from morphtraj.features import (
    MelPca,
    StftConfig,
    contrast_from_magnitude,
    frame_count,
    log_attack_time,
    log_mel,
    mel_center_frequencies,
    mel_filterbank,
    mfcc,
    pca_reduce_mel,
    pgm_bytes,
    read_mat,
    spectral_centroid,
    spectral_contrast,
    spectral_flux,
    timbre_point,
    write_mat,
    write_pgm,
)

from conftest import SR, noise_clip, silence_clip, sine_clip

CFG = StftConfig()


# --- log-mel ---------------------------------------------------------------


def test_silence_log_mel_is_floor():
    mel = log_mel(silence_clip(), CFG)
    assert np.all(mel.values == np.log(CFG.log_floor))


def test_frame_count_formula():
    clip = sine_clip(duration_s=0.5)
    mel = log_mel(clip, CFG)
    assert mel.values.shape == ((len(clip) - CFG.n_fft) // CFG.hop + 1, CFG.n_mels)


def test_short_clip_rejected():
    with pytest.raises(ValueError, match="window"):
        log_mel(AudioClip(np.zeros(CFG.n_fft - 1), SR), CFG)


def test_sine_argmax_at_nearest_center():
    mel = log_mel(sine_clip(1000.0), CFG).values
    centers = mel_center_frequencies(CFG)
    assert int(np.argmax(mel.mean(axis=0))) == int(np.argmin(np.abs(centers - 1000.0)))


def test_amplitude_doubling_adds_ln4():
    quiet = sine_clip(440.0, amp=0.25)
    loud = sine_clip(440.0, amp=0.5)
    m_quiet = log_mel(quiet, CFG).values
    m_loud = log_mel(loud, CFG).values
    floor = np.log(CFG.log_floor)
    above = (m_quiet > floor + 1e-9) & (m_loud > floor + 1e-9)
    assert np.allclose((m_loud - m_quiet)[above], np.log(4.0), atol=1e-9)


def test_log_mel_deterministic():
    a = log_mel(noise_clip(seed=5), CFG).values
    b = log_mel(noise_clip(seed=5), CFG).values
    assert np.array_equal(a, b)


def test_filterbank_properties():
    fb = mel_filterbank(CFG, SR)
    assert np.all(fb >= 0)
    assert fb.sum(axis=0).max() <= 1.0 + 1e-12
    centers = mel_center_frequencies(CFG)
    assert np.all(np.diff(centers) > 0)


def test_silence_append_shorter_than_hop_invariant():
    # Pick a frame-aligned length so no added sample completes a new frame.
    n = CFG.n_fft + 40 * CFG.hop
    base = sine_clip(440.0, duration_s=n / SR)
    assert len(base) == n
    ref = log_mel(base, CFG).values
    for pad in (1, CFG.hop // 2, CFG.hop - 1):
        padded = AudioClip(np.pad(base.samples, (0, pad)), SR)
        assert np.array_equal(log_mel(padded, CFG).values, ref)


# --- MFCC ------------------------------------------------------------------


def test_mfcc_constant_frame_closed_form():
    c = -3.7
    frame = np.full((4, CFG.n_mels), c)
    out = mfcc(frame, 13).values
    assert np.allclose(out[:, 0], c * np.sqrt(CFG.n_mels), atol=1e-9)
    assert np.allclose(out[:, 1:], 0.0, atol=1e-9)


def test_mfcc_linearity():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((6, CFG.n_mels))
    b = rng.standard_normal((6, CFG.n_mels))
    lhs = mfcc(a + b, 13).values
    rhs = mfcc(a, 13).values + mfcc(b, 13).values
    assert np.allclose(lhs, rhs, atol=1e-9)


def test_mfcc_silence_vs_sine_differ_in_c0():
    m_sil = mfcc(log_mel(silence_clip(), CFG)).values
    m_sin = mfcc(log_mel(sine_clip(), CFG)).values
    assert abs(m_sil[:, 0].mean() - m_sin[:, 0].mean()) > 1.0


def test_mfcc_coeff_bound():
    with pytest.raises(ValueError):
        mfcc(np.zeros((2, 8)), 9)


def test_dct_orthonormal_energy():
    rng = np.random.default_rng(1)
    frame = rng.standard_normal((3, CFG.n_mels))
    full = dct(frame, type=2, norm="ortho", axis=1)
    assert np.allclose((full**2).sum(), (frame**2).sum(), rtol=1e-9)


# --- descriptors -----------------------------------------------------------


def test_centroid_sine():
    c = spectral_centroid(sine_clip(440.0), CFG)
    assert 430.0 <= c.mean() <= 450.0


def test_centroid_silence_zero():
    assert np.all(spectral_centroid(silence_clip(), CFG) == 0.0)


def test_centroid_two_tone_mix():
    t = np.arange(SR) / SR
    mix = AudioClip(0.3 * np.sin(2 * np.pi * 300 * t) + 0.3 * np.sin(2 * np.pi * 500 * t), SR)
    assert abs(spectral_centroid(mix, CFG).mean() - 400.0) <= 10.0


def test_centroid_within_nyquist():
    for seed in range(5):
        c = spectral_centroid(noise_clip(seed=seed), CFG)
        assert np.all(c >= 0) and np.all(c <= SR / 2)


def test_flux_steady_sine_near_zero():
    flux = spectral_flux(sine_clip(440.0), CFG)
    assert np.max(flux[5:-5]) < 0.05


def test_flux_silence_zero():
    assert np.all(spectral_flux(silence_clip(), CFG) == 0.0)


def test_flux_peak_at_frequency_switch():
    half = SR // 2
    t = np.arange(half) / SR
    x = np.concatenate([0.6 * np.sin(2 * np.pi * 300 * t), 0.6 * np.sin(2 * np.pi * 1200 * t)])
    flux = spectral_flux(AudioClip(x, SR), CFG)
    # frames straddling the switch start once the window first touches sample `half`
    first = (half - CFG.n_fft) // CFG.hop + 1
    last = half // CFG.hop
    assert first <= int(np.argmax(flux)) + 1 <= last


def test_flux_needs_two_frames():
    with pytest.raises(ValueError):
        spectral_flux(AudioClip(np.zeros(CFG.n_fft), SR), CFG)


def test_contrast_flat_spectrum_near_zero():
    freqs = np.fft.rfftfreq(CFG.n_fft, 1.0 / SR)
    flat = np.full((10, freqs.size), 0.5)
    out = contrast_from_magnitude(flat, freqs)
    assert np.allclose(out, 0.0, atol=1e-12)


def test_contrast_sine_band_dominates():
    out = spectral_contrast(sine_clip(1000.0), CFG).mean(axis=0)
    # 1 kHz lives in band 2 ([800, 1600))
    assert out[2] > out[1] + 1.0 and out[2] > out[3] + 1.0


def test_contrast_silence_zero():
    out = spectral_contrast(silence_clip(), CFG)
    assert np.allclose(out, 0.0)


def test_lat_instant_onset():
    step = AudioClip(0.9 * np.ones(SR), SR)
    assert log_attack_time(step) <= np.log10(0.01) + 1e-12


def test_lat_linear_ramp():
    t = np.arange(SR) / SR
    ramp = AudioClip(t * np.sin(2 * np.pi * 440 * t), SR)
    assert abs(log_attack_time(ramp) - np.log10(0.8)) <= 0.05


def test_lat_silence_errors():
    with pytest.raises(ValueError):
        log_attack_time(silence_clip())


def test_timbre_point_finite():
    tp = timbre_point(sine_clip(), CFG)
    arr = tp.as_array()
    assert np.all(np.isfinite(arr))
    assert 0 <= tp.spectral_centroid <= SR / 2


# --- PCA -------------------------------------------------------------------


def test_pca_identical_inputs():
    mel = log_mel(noise_clip(seed=2), CFG)
    out = pca_reduce_mel([mel, mel], 2)
    assert np.array_equal(out[0], out[1])
    assert out[0].shape == (mel.values.shape[0], 2)


def test_pca_rank1_line_exact():
    rng = np.random.default_rng(4)
    direction = rng.standard_normal(CFG.n_mels)
    offsets = rng.standard_normal(20)
    frames = np.outer(offsets, direction) + 1.5
    pca = MelPca([frames], 1)
    reduced = pca.transform(frames)
    recon = reduced @ pca.components + pca.mean
    assert np.allclose(recon, frames, atol=1e-9)


def test_pca_supports_two_and_three_components():
    mels = [log_mel(noise_clip(seed=6), CFG), log_mel(sine_clip(), CFG)]
    for n in (2, 3):
        out = pca_reduce_mel(mels, n)
        assert out[0].shape[1] == n


def test_pca_rank_exceeded():
    frames = np.outer(np.arange(5.0), np.ones(CFG.n_mels))
    with pytest.raises(ValueError, match="rank"):
        MelPca([frames], 2)


def test_pca_sign_deterministic():
    rng = np.random.default_rng(9)
    frames = rng.standard_normal((30, CFG.n_mels))
    a = MelPca([frames], 3).components
    b = MelPca([frames.copy()], 3).components
    assert np.array_equal(a, b)
    for row in a:
        assert row[np.argmax(np.abs(row))] > 0


# --- exports ---------------------------------------------------------------


def test_mat_roundtrip(tmp_path):
    rng = np.random.default_rng(8)
    m = rng.standard_normal((7, 5))
    path = tmp_path / "m.mat"
    write_mat(m, path)
    back = read_mat(path)
    assert back.shape == (7, 5)
    assert np.allclose(back, m, atol=1e-6)  # f32 storage
    raw = path.read_bytes()
    assert len(raw) == 8 + 7 * 5 * 4


def test_pgm_layout_and_uniform_silence(tmp_path):
    mel = log_mel(silence_clip(0.2), CFG).values
    data = pgm_bytes(mel)
    header, rest = data.split(b"\n", 1)
    assert header == b"P5"
    dims = rest.split(b"\n", 2)
    width, height = map(int, dims[0].split())
    assert (width, height) == (mel.shape[0], mel.shape[1])
    assert set(data[data.index(b"255\n") + 4 :]) == {0}  # uniform image
    path = tmp_path / "mel.pgm"
    write_pgm(mel, path)
    assert path.read_bytes() == data
