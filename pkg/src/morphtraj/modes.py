"""Assembly of the three morph products from a backend and a schedule.

Static: one searched intermediate between the resynthesized endpoints.
Cyclostationary: the full schedule rendered as N discrete hybrids.
Dynamic: one clip whose blend evolves over time, built by taking each
hybrid's native time slice and joining the slices with short equal-power
crossfades. (A latent-domain concatenation would need a decoder the
library does not own, so the splice happens in the audio domain; slices
are non-overlapping and boundary-aligned.)
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from morphtraj.audio import AudioClip, load_wav, write_wav
from morphtraj.backends import MorphBackend
from morphtraj.spdp import AlphaSchedule, SearchConfig, binary_search_alphas, search_single_target

CROSSFADE_S = 0.010
MIN_SEGMENT_S = 0.050


@dataclass(frozen=True)
class MorphTrajectory:
    """A rendered morph: schedule, clips, and the prepared originals."""

    mode: str
    schedule: AlphaSchedule
    clips: list[AudioClip]
    source: AudioClip
    target: AudioClip
    feature_mats: list[np.ndarray] | None = None
    dynamic_clip: AudioClip | None = None

    def __len__(self) -> int:
        return len(self.clips)


def _render(backend: MorphBackend, schedule: AlphaSchedule):
    clips = [backend.morph(a) for a in schedule.alphas]
    mats = [backend.morph_features(a) for a in schedule.alphas]
    if any(m is None for m in mats):
        mats = None
    return clips, mats


def static_morph(backend: MorphBackend, pair, target_p: float,
                 cfg: SearchConfig = SearchConfig()) -> MorphTrajectory:
    """Search one interior proportion target and render its hybrid."""
    schedule = search_single_target(backend, pair, target_p, cfg)
    clips, mats = _render(backend, schedule)
    return MorphTrajectory("static", schedule, clips, pair[0], pair[1], feature_mats=mats)


def cyclostationary_morph(backend: MorphBackend, pair,
                          cfg: SearchConfig = SearchConfig()) -> MorphTrajectory:
    """N perceptually uniform hybrids, endpoints included."""
    if cfg.n_points < 3:
        raise ValueError("cyclostationary morphing needs n_points >= 3")
    schedule = binary_search_alphas(backend, pair, cfg)
    clips, mats = _render(backend, schedule)
    return MorphTrajectory("cyclostationary", schedule, clips, pair[0], pair[1], feature_mats=mats)


def _splice_with_crossfades(clips: list[AudioClip], fade_len: int) -> AudioClip:
    """Concatenate native time slices of equal-length clips.

    Slice i of the output comes from clip i; boundaries blend the outgoing
    and incoming clips over ``fade_len`` samples with an equal-power ramp.
    Output length equals the clip length exactly.
    """
    n = len(clips)
    total = len(clips[0])
    seg = total // n
    bounds = [i * seg for i in range(n)] + [total]  # remainder goes to the final slice
    out = np.zeros(total)
    for i, clip in enumerate(clips):
        out[bounds[i] : bounds[i + 1]] = clip.samples[bounds[i] : bounds[i + 1]]
    for i in range(1, n):
        b = bounds[i]
        half = fade_len // 2
        start = max(b - half, bounds[i - 1])
        stop = min(start + fade_len, bounds[i + 1])
        k = np.arange(stop - start)
        theta = (k + 0.5) / (stop - start) * (np.pi / 2.0)
        out[start:stop] = (
            np.cos(theta) * clips[i - 1].samples[start:stop]
            + np.sin(theta) * clips[i].samples[start:stop]
        )
    return AudioClip(np.clip(out, -1.0, 1.0), clips[0].sample_rate)


def dynamic_morph(backend: MorphBackend, pair,
                  cfg: SearchConfig = SearchConfig()) -> MorphTrajectory:
    """One clip whose blend advances through the schedule over time."""
    rate = pair[0].sample_rate
    total = len(pair[0])
    if total // cfg.n_points < int(MIN_SEGMENT_S * rate):
        raise ValueError(
            f"pair too short for {cfg.n_points} segments of >= {MIN_SEGMENT_S * 1000:.0f} ms"
        )
    schedule = binary_search_alphas(backend, pair, cfg)
    clips, mats = _render(backend, schedule)
    fade_len = int(CROSSFADE_S * rate)
    dynamic = _splice_with_crossfades(clips, fade_len)
    return MorphTrajectory("dynamic", schedule, clips, pair[0], pair[1],
                           feature_mats=mats, dynamic_clip=dynamic)


# ---------------------------------------------------------------------------
# Manifest I/O
# ---------------------------------------------------------------------------


def save_trajectory(traj: MorphTrajectory, outdir, clips_subdir: str = "clips") -> Path:
    """Write clip WAVs and a manifest; returns the manifest path.

    Layout: ``<outdir>/manifest.json`` plus ``<outdir>/clips/NN.wav``
    (and ``dynamic.wav``, ``source.wav``, ``target.wav``).
    """
    outdir = Path(outdir)
    clip_dir = outdir / clips_subdir
    clip_dir.mkdir(parents=True, exist_ok=True)
    clip_files = []
    for i, clip in enumerate(traj.clips):
        rel = f"{clips_subdir}/{i:02d}.wav"
        write_wav(clip, outdir / rel)
        clip_files.append(rel)
    write_wav(traj.source, outdir / clips_subdir / "source.wav")
    write_wav(traj.target, outdir / clips_subdir / "target.wav")
    manifest = {
        "mode": traj.mode,
        "alphas": traj.schedule.to_dict()["alphas"],
        "targets": traj.schedule.to_dict()["targets"],
        "achieved": traj.schedule.to_dict()["achieved"],
        "converged": traj.schedule.to_dict()["converged"],
        "clip_files": clip_files,
        "source_file": f"{clips_subdir}/source.wav",
        "target_file": f"{clips_subdir}/target.wav",
        "feature": traj.schedule.feature,
        "tol": traj.schedule.tol,
        "sample_rate": traj.source.sample_rate,
    }
    if traj.dynamic_clip is not None:
        write_wav(traj.dynamic_clip, outdir / clips_subdir / "dynamic.wav")
        manifest["dynamic_file"] = f"{clips_subdir}/dynamic.wav"
    path = outdir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return path


def load_trajectory(manifest_path) -> MorphTrajectory:
    """Rebuild a trajectory from a manifest written by :func:`save_trajectory`."""
    manifest_path = Path(manifest_path)
    d = json.loads(manifest_path.read_text())
    base = manifest_path.parent
    clips = [load_wav(base / rel) for rel in d["clip_files"]]
    schedule = AlphaSchedule(
        alphas=[float(a) for a in d["alphas"]],
        targets=[_point(t) for t in d["targets"]],
        achieved=[_point(a) for a in d["achieved"]],
        converged=[bool(c) for c in d.get("converged", [True] * len(d["alphas"]))],
        iterations=[0] * len(d["alphas"]),
        feature=d.get("feature", "log-mel"),
        tol=float(d.get("tol", 1e-2)),
    )
    dynamic = load_wav(base / d["dynamic_file"]) if "dynamic_file" in d else None
    return MorphTrajectory(
        mode=d["mode"],
        schedule=schedule,
        clips=clips,
        source=load_wav(base / d["source_file"]),
        target=load_wav(base / d["target_file"]),
        dynamic_clip=dynamic,
    )


def _point(pair):
    from morphtraj.spdp import SpdpPoint

    return SpdpPoint(np.array(pair, dtype=np.float64))
