import json

import numpy as np
import pytest

from morphtraj.backends import CrossfadeBackend, LinearMelBackend, WarpedBackend
from morphtraj.modes import (
    cyclostationary_morph,
    dynamic_morph,
    load_trajectory,
    save_trajectory,
    static_morph,
)
from morphtraj.spdp import SearchConfig

from conftest import SR, silence_clip, sine_clip

CFG = SearchConfig(n_points=5, tol=1e-3)


def test_static_linear_target_half(sine_noise_pair):
    traj = static_morph(LinearMelBackend(sine_noise_pair), sine_noise_pair, 0.5, CFG)
    assert traj.mode == "static"
    assert len(traj.clips) == 3  # resynth endpoints + one interior
    assert traj.schedule.alphas[1] == pytest.approx(0.5, abs=CFG.tol)


def test_static_warped_target_half(sine_noise_pair):
    traj = static_morph(WarpedBackend(sine_noise_pair, 3.0), sine_noise_pair, 0.5, CFG)
    assert traj.schedule.alphas[1] == pytest.approx(0.5 ** (1 / 3), abs=2e-3)


def test_static_rejects_boundary_targets(sine_noise_pair):
    backend = LinearMelBackend(sine_noise_pair)
    for bad in (0.0, 1.0):
        with pytest.raises(ValueError):
            static_morph(backend, sine_noise_pair, bad, CFG)


def test_cyclostationary_n5_uniform(sine_noise_pair):
    traj = cyclostationary_morph(LinearMelBackend(sine_noise_pair), sine_noise_pair, CFG)
    assert len(traj.clips) == 5
    firsts = [pt.p[0] for pt in traj.schedule.achieved]
    assert firsts == pytest.approx([0.0, 0.25, 0.5, 0.75, 1.0], abs=CFG.tol)


def test_cyclostationary_needs_three_points(sine_noise_pair):
    with pytest.raises(ValueError):
        cyclostationary_morph(LinearMelBackend(sine_noise_pair), sine_noise_pair,
                              SearchConfig(n_points=2))


def test_cyclostationary_increment_std_bounded(sine_noise_pair):
    traj = cyclostationary_morph(WarpedBackend(sine_noise_pair, 3.0), sine_noise_pair, CFG)
    increments = np.diff([pt.p[0] for pt in traj.schedule.achieved])
    assert increments.std() <= 2 * CFG.tol


def test_dynamic_n2_crossfade_silence_to_sine():
    pair = (silence_clip(1.0), sine_clip(440.0, duration_s=1.0))
    traj = dynamic_morph(CrossfadeBackend(pair), pair, SearchConfig(n_points=2, tol=1e-3))
    out = traj.dynamic_clip
    assert out is not None and len(out) == SR
    boundary = SR // 2
    fade = int(0.010 * SR)
    assert np.all(out.samples[: boundary - fade // 2] == 0.0)
    assert np.max(np.abs(out.samples[boundary + fade :])) > 0.3


def test_dynamic_length_conserved(sine_noise_pair):
    traj = dynamic_morph(LinearMelBackend(sine_noise_pair), sine_noise_pair, CFG)
    assert len(traj.dynamic_clip) == len(sine_noise_pair[0])


def test_dynamic_segments_match_native_slices(sine_noise_pair):
    traj = dynamic_morph(LinearMelBackend(sine_noise_pair), sine_noise_pair, CFG)
    total = len(sine_noise_pair[0])
    seg = total // CFG.n_points
    fade = int(0.010 * SR)
    for i, clip in enumerate(traj.clips):
        start = i * seg + (fade if i else 0)
        stop = (i + 1) * seg - fade if i < CFG.n_points - 1 else total
        assert np.array_equal(traj.dynamic_clip.samples[start:stop], clip.samples[start:stop])


def test_dynamic_too_short_rejected():
    pair = (sine_clip(duration_s=0.2), sine_clip(500.0, duration_s=0.2))
    with pytest.raises(ValueError, match="too short"):
        dynamic_morph(CrossfadeBackend(pair), pair, SearchConfig(n_points=15))


def test_dynamic_n15(sine_noise_pair):
    traj = dynamic_morph(CrossfadeBackend(sine_noise_pair), sine_noise_pair,
                         SearchConfig(n_points=15, tol=5e-3, max_iters=30))
    assert len(traj.clips) == 15
    assert len(traj.dynamic_clip) == len(sine_noise_pair[0])


def test_manifest_roundtrip(tmp_path, sine_noise_pair):
    traj = cyclostationary_morph(LinearMelBackend(sine_noise_pair), sine_noise_pair, CFG)
    manifest_path = save_trajectory(traj, tmp_path)
    data = json.loads(manifest_path.read_text())
    for key in ("mode", "alphas", "targets", "achieved", "clip_files"):
        assert key in data
    assert len(data["clip_files"]) == 5
    back = load_trajectory(manifest_path)
    assert back.mode == traj.mode
    assert back.schedule.alphas == traj.schedule.alphas
    assert len(back.clips) == 5
    # WAV quantization only
    assert np.max(np.abs(back.clips[2].samples - traj.clips[2].samples)) <= 1 / 32768 + 1e-12
    assert np.max(np.abs(back.source.samples - traj.source.samples)) <= 1 / 32768 + 1e-12


def test_manifest_dynamic_file(tmp_path, sine_noise_pair):
    traj = dynamic_morph(CrossfadeBackend(sine_noise_pair), sine_noise_pair, CFG)
    manifest_path = save_trajectory(traj, tmp_path)
    data = json.loads(manifest_path.read_text())
    assert "dynamic_file" in data
    back = load_trajectory(manifest_path)
    assert back.dynamic_clip is not None
