"""Objective scoring of morph trajectories.

Four families of metrics, one per morphing criterion:

- correspondence: midpoint MFCC proportion error, plus Fréchet distances
  between embedding sets of the morphs and of the source material;
- intermediateness: total perceptual distance along the path;
- smoothness: mean/std of consecutive perceptual distances and the mean
  step length in normalized timbre space;
- reconstruction: perceptual error of the resynthesized endpoints.

The perceptual distance and the embedding extractor are pluggable. The
default distance (LMD) is an L2 over log-mel matrices; learned distances
can be swapped in via the external-command adapter without touching any
formula. Reports carry provenance so numbers computed under different
plugins are never silently compared.
"""

from __future__ import annotations

import json
import math
import subprocess
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from morphtraj.audio import AudioClip, write_wav
from morphtraj.features import StftConfig, log_mel, mfcc, timbre_point
from morphtraj.modes import MorphTrajectory

_RIDGE = 1e-6
_MAX_WORKERS = 4


# ---------------------------------------------------------------------------
# Pluggable distance and embedding contracts
# ---------------------------------------------------------------------------


class LogMelDistance:
    """L2 distance between log-mel matrices (the default stand-in, "LMD")."""

    parallel_safe = False

    def __init__(self, stft: StftConfig = StftConfig()):
        self.stft = stft
        self.name = "lmd"

    def __call__(self, a: AudioClip, b: AudioClip) -> float:
        return self.on_mats(log_mel(a, self.stft).values, log_mel(b, self.stft).values)

    def on_mats(self, ma: np.ndarray, mb: np.ndarray) -> float:
        return float(np.linalg.norm(ma - mb))


class ExternalCommandDistance:
    """Adapter spawning an executable that prints one float.

    The argument template must contain ``{a}`` and ``{b}`` placeholders for
    the two WAV paths, e.g. ``["python", "cdpam_cli.py", "{a}", "{b}"]``.
    """

    parallel_safe = True

    def __init__(self, template: list[str], name: str | None = None):
        if not any("{a}" in t for t in template) or not any("{b}" in t for t in template):
            raise ValueError("distance template needs {a} and {b} placeholders")
        self.template = list(template)
        self.name = name or f"cmd:{Path(template[0]).name}"

    def __call__(self, a: AudioClip, b: AudioClip) -> float:
        with tempfile.TemporaryDirectory() as tmp:
            pa, pb = Path(tmp) / "a.wav", Path(tmp) / "b.wav"
            write_wav(a, pa)
            write_wav(b, pb)
            argv = [t.replace("{a}", str(pa)).replace("{b}", str(pb)) for t in self.template]
            out = subprocess.run(argv, capture_output=True, text=True, check=True).stdout
        return float(out.strip().split()[0])


class MelStatsEmbedding:
    """Per-band statistics of the log-mel as a fixed-length vector.

    mean+std pooling gives 2*n_mels dims (128 by default); mean-only gives
    n_mels. The two poolings serve as the default FAD/FID extractor pair.
    """

    def __init__(self, stft: StftConfig = StftConfig(), include_std: bool = True):
        self.stft = stft
        self.include_std = include_std
        self.name = f"mel-stats-{stft.n_mels * (2 if include_std else 1)}"

    def __call__(self, clip: AudioClip) -> np.ndarray:
        values = log_mel(clip, self.stft).values
        if self.include_std:
            return np.concatenate([values.mean(axis=0), values.std(axis=0)])
        return values.mean(axis=0)


class ExternalCommandEmbedding:
    """Adapter spawning an executable that prints whitespace-separated floats."""

    def __init__(self, template: list[str], name: str | None = None):
        if not any("{wav}" in t for t in template):
            raise ValueError("embedding template needs a {wav} placeholder")
        self.template = list(template)
        self.name = name or f"cmd:{Path(template[0]).name}"
        self._dim = None

    def __call__(self, clip: AudioClip) -> np.ndarray:
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "clip.wav"
            write_wav(clip, path)
            argv = [t.replace("{wav}", str(path)) for t in self.template]
            out = subprocess.run(argv, capture_output=True, text=True, check=True).stdout
        vec = np.array([float(tok) for tok in out.split()])
        if self._dim is None:
            self._dim = vec.size
        elif vec.size != self._dim:
            raise ValueError(f"extractor dimension changed: {vec.size} != {self._dim}")
        return vec


# ---------------------------------------------------------------------------
# Metric primitives
# ---------------------------------------------------------------------------


def frechet_distance(set_a, set_b) -> float:
    """Fréchet distance between Gaussian fits of two embedding sets.

    ||mu_a - mu_b||^2 + Tr(Sa + Sb - 2 (Sa Sb)^(1/2)), with the matrix
    square root taken through the symmetric product sqrt(Sa) Sb sqrt(Sa)
    (eigendecomposition, negative eigenvalues clipped at zero). Sets
    smaller than dim+1 get a ridge so the covariances stay usable.
    """
    a = np.atleast_2d(np.asarray(set_a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(set_b, dtype=np.float64))
    if a.size == 0 or b.size == 0:
        raise ValueError("embedding sets must be non-empty")
    if a.shape[1] != b.shape[1]:
        raise ValueError("embedding dimensions differ")
    dim = a.shape[1]

    def stats(x):
        mu = x.mean(axis=0)
        cov = np.cov(x, rowvar=False, ddof=1) if x.shape[0] > 1 else np.zeros((dim, dim))
        cov = np.atleast_2d(cov)
        if x.shape[0] < dim + 1:
            cov = cov + _RIDGE * np.eye(dim)
        return mu, cov

    mu_a, cov_a = stats(a)
    mu_b, cov_b = stats(b)

    w_a, v_a = np.linalg.eigh(cov_a)
    sqrt_a = (v_a * np.sqrt(np.clip(w_a, 0.0, None))) @ v_a.T
    w_m = np.linalg.eigvalsh(sqrt_a @ cov_b @ sqrt_a)
    tr_sqrt = np.sum(np.sqrt(np.clip(w_m, 0.0, None)))

    fd = float(np.sum((mu_a - mu_b) ** 2) + np.trace(cov_a) + np.trace(cov_b) - 2.0 * tr_sqrt)
    return max(fd, 0.0)


def _midpoint_proportion(m_mid: np.ndarray, m0: np.ndarray, m1: np.ndarray) -> float:
    d0 = float(np.linalg.norm(m_mid - m0))
    d1 = float(np.linalg.norm(m_mid - m1))
    if d0 + d1 == 0.0:
        return 0.5  # equidistant trivially
    return d0 / (d0 + d1)


def mfccs_error(traj: MorphTrajectory, n_coeffs: int = 13) -> float:
    """Absolute deviation of the midpoint MFCC proportion from 1/2.

    Requires an odd trajectory length so the midpoint exists. When the
    trajectory carries feature-space oracle matrices the MFCCs are taken
    from those (free of resynthesis error); otherwise from the clips.
    """
    n = len(traj.clips)
    if n % 2 == 0:
        raise ValueError("midpoint MFCC error needs an odd number of points")
    mid = n // 2
    if traj.feature_mats is not None:
        m_mid = mfcc(traj.feature_mats[mid], n_coeffs).values
        m0 = mfcc(log_mel(traj.source), n_coeffs).values
        m1 = mfcc(log_mel(traj.target), n_coeffs).values
    else:
        m_mid = mfcc(log_mel(traj.clips[mid]), n_coeffs).values
        m0 = mfcc(log_mel(traj.source), n_coeffs).values
        m1 = mfcc(log_mel(traj.target), n_coeffs).values
    return abs(_midpoint_proportion(m_mid, m0, m1) - 0.5)


def _consecutive_distances(traj: MorphTrajectory, d) -> list[float]:
    if traj.feature_mats is not None and hasattr(d, "on_mats"):
        mats = traj.feature_mats
        return [d.on_mats(mats[i], mats[i + 1]) for i in range(len(mats) - 1)]
    pairs = list(zip(traj.clips[:-1], traj.clips[1:]))
    if getattr(d, "parallel_safe", False) and len(pairs) > 1:
        with ThreadPoolExecutor(max_workers=_MAX_WORKERS) as pool:
            return list(pool.map(lambda p: d(*p), pairs))
    return [d(a, b) for a, b in pairs]


def trajectory_distances(traj: MorphTrajectory, d) -> tuple[float, float, float]:
    """(total, mean, std) of consecutive perceptual distances.

    The std uses the population 1/(N-1) normalization over the N-1
    transition distances, matching the smoothness formula exactly.
    """
    if len(traj.clips) < 2:
        raise ValueError("need at least 2 points")
    dists = np.array(_consecutive_distances(traj, d))
    total = float(dists.sum())
    mean = total / dists.size
    std = float(np.sqrt(((dists - mean) ** 2).mean()))
    return total, mean, std


def endpoint_error(traj: MorphTrajectory, originals=None, d=None) -> float:
    """Mean perceptual distance between originals and resynthesized endpoints."""
    if d is None:
        d = LogMelDistance()
    x0, x1 = originals if originals is not None else (traj.source, traj.target)
    return 0.5 * (d(x0, traj.clips[0]) + d(x1, traj.clips[-1]))


# An axis whose spread falls below its measurement resolution is treated as
# constant; otherwise min-max normalization would stretch numerical noise
# (e.g. the ~1e-5 flux of a pure tone) into a full-range coordinate.
_AXIS_RESOLUTION = np.array([1e-3, 0.1, 1e-3])  # LAT decades, Hz, flux


def timbre_points(traj: MorphTrajectory, normalize: bool = True) -> np.ndarray:
    """(N, 3) timbre coordinates; each axis min-max normalized over the
    trajectory (a constant or sub-resolution axis stays at zero)."""
    pts = np.array([timbre_point(c).as_array() for c in traj.clips])
    if not normalize:
        return pts
    lo = pts.min(axis=0)
    rng = pts.max(axis=0) - lo
    out = np.zeros_like(pts)
    nz = rng > _AXIS_RESOLUTION
    out[:, nz] = (pts[:, nz] - lo[nz]) / rng[nz]
    return out


def timbral_distance(traj: MorphTrajectory) -> float:
    """Mean consecutive Euclidean step in normalized timbre space."""
    if len(traj.clips) < 2:
        raise ValueError("need at least 2 points")
    pts = timbre_points(traj)
    return float(np.linalg.norm(np.diff(pts, axis=0), axis=1).mean())


# ---------------------------------------------------------------------------
# Aggregate report
# ---------------------------------------------------------------------------

CSV_FIELDS = [
    "label", "mode", "n_points", "mfccs_e", "fad", "fid",
    "d_total", "d_mean", "d_std", "d_endpoint", "l2_timbre",
    "distance", "extractor_fad", "extractor_fid",
]


@dataclass(frozen=True)
class MetricReport:
    mfccs_e: float | None
    fad: float
    fid: float
    d_total: float
    d_mean: float
    d_std: float
    d_endpoint: float
    l2_timbre: float
    provenance: dict

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "MetricReport":
        return cls(**json.loads(text))

    def csv_row(self, label: str = "") -> list[str]:
        prov = self.provenance
        vals = {
            "label": label,
            "mode": prov.get("mode", ""),
            "n_points": prov.get("n_points", ""),
            "mfccs_e": self.mfccs_e,
            "fad": self.fad,
            "fid": self.fid,
            "d_total": self.d_total,
            "d_mean": self.d_mean,
            "d_std": self.d_std,
            "d_endpoint": self.d_endpoint,
            "l2_timbre": self.l2_timbre,
            "distance": prov.get("distance", ""),
            "extractor_fad": prov.get("extractor_fad", ""),
            "extractor_fid": prov.get("extractor_fid", ""),
        }
        return ["" if vals[f] is None else str(vals[f]) for f in CSV_FIELDS]


def evaluate(
    traj: MorphTrajectory,
    originals=None,
    source_set=None,
    distance=None,
    extractor_fad=None,
    extractor_fid=None,
) -> MetricReport:
    """All metrics for one trajectory.

    ``source_set`` is the reference clip set for the Fréchet metrics; it
    defaults to the originals pair when no class-level set is supplied.
    ``mfccs_e`` is None for even-length trajectories (no midpoint).
    """
    distance = distance or LogMelDistance()
    extractor_fad = extractor_fad or MelStatsEmbedding(include_std=True)
    extractor_fid = extractor_fid or MelStatsEmbedding(include_std=False)
    originals = originals or (traj.source, traj.target)
    src_clips = list(source_set) if source_set else list(originals)

    mrp_fad = np.array([extractor_fad(c) for c in traj.clips])
    src_fad = np.array([extractor_fad(c) for c in src_clips])
    mrp_fid = np.array([extractor_fid(c) for c in traj.clips])
    src_fid = np.array([extractor_fid(c) for c in src_clips])

    total, mean, std = trajectory_distances(traj, distance)
    report = MetricReport(
        mfccs_e=mfccs_error(traj) if len(traj.clips) % 2 == 1 else None,
        fad=frechet_distance(mrp_fad, src_fad),
        fid=frechet_distance(mrp_fid, src_fid),
        d_total=total,
        d_mean=mean,
        d_std=std,
        d_endpoint=endpoint_error(traj, originals, distance),
        l2_timbre=timbral_distance(traj),
        provenance={
            "distance": distance.name,
            "extractor_fad": extractor_fad.name,
            "extractor_fid": extractor_fid.name,
            "feature": traj.schedule.feature,
            "mode": traj.mode,
            "n_points": len(traj.clips),
            "oracle_features": traj.feature_mats is not None,
        },
    )
    for name in ("fad", "fid", "d_total", "d_mean", "d_std", "d_endpoint", "l2_timbre"):
        value = getattr(report, name)
        if not math.isfinite(value) or value < 0:
            raise RuntimeError(f"metric {name} out of range: {value}")
    return report
