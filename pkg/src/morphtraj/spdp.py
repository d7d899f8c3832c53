"""Distance-proportion points and the constant-increment factor search.

A morph at factor ``alpha`` is placed between the two endpoints by the
2-vector ``p = [d0/(d0+d1), d1/(d0+d1)]`` of feature-space L2 distances to
source and target. ``p[0]`` runs from 0 (at the source) to 1 (at the
target) and increases monotonically with alpha for well-behaved
generators, so factors realizing any target proportion can be found by
bisection. The search walks a list of equally spaced targets, reusing each
solution as the lower bound of the next bracket, which makes the schedule
nondecreasing by construction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from morphtraj.audio import AudioClip
from morphtraj.features import MelPca, StftConfig, log_mel, mfcc, spectral_contrast

FEATURE_CHOICES = ("log-mel", "mfcc", "spectral-contrast", "reduced-mel")


@dataclass(frozen=True)
class SpdpPoint:
    """Distance proportions to (source, target); components sum to 1."""

    p: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=np.float64)
        if p.shape != (2,):
            raise ValueError("SPDP point must be a 2-vector")
        if np.any(p < -1e-12) or not np.all(np.isfinite(p)):
            raise ValueError("SPDP components must be finite and nonnegative")
        p = p.copy()
        p.flags.writeable = False
        object.__setattr__(self, "p", p)

    def as_list(self) -> list[float]:
        return [float(self.p[0]), float(self.p[1])]


@dataclass(frozen=True)
class SearchConfig:
    """Knobs for the constant-increment search."""

    n_points: int = 5
    tol: float = 1e-2
    max_iters: int = 40
    feature: str = "log-mel"
    stft: StftConfig = field(default_factory=StftConfig)

    def __post_init__(self):
        if self.n_points < 2:
            raise ValueError("n_points must be >= 2")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        parse_feature(self.feature)


@dataclass(frozen=True)
class AlphaSchedule:
    """Result of the search: factors plus target/achieved proportions."""

    alphas: list[float]
    targets: list[SpdpPoint]
    achieved: list[SpdpPoint]
    converged: list[bool]
    iterations: list[int]
    feature: str
    tol: float

    def to_dict(self) -> dict:
        return {
            "alphas": [float(a) for a in self.alphas],
            "targets": [t.as_list() for t in self.targets],
            "achieved": [a.as_list() for a in self.achieved],
            "converged": [bool(c) for c in self.converged],
            "iterations": [int(i) for i in self.iterations],
            "feature": self.feature,
            "tol": float(self.tol),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "AlphaSchedule":
        return cls(
            alphas=[float(a) for a in d["alphas"]],
            targets=[SpdpPoint(np.array(t)) for t in d["targets"]],
            achieved=[SpdpPoint(np.array(a)) for a in d["achieved"]],
            converged=[bool(c) for c in d["converged"]],
            iterations=[int(i) for i in d.get("iterations", [0] * len(d["alphas"]))],
            feature=d["feature"],
            tol=float(d["tol"]),
        )

    @classmethod
    def from_json(cls, text: str) -> "AlphaSchedule":
        return cls.from_dict(json.loads(text))


def parse_feature(feature: str) -> tuple[str, int | None]:
    """Split a feature choice like ``reduced-mel:3`` into (kind, n)."""
    if feature in ("log-mel", "mfcc", "spectral-contrast"):
        return feature, None
    if feature == "reduced-mel":
        return "reduced-mel", 2
    if feature.startswith("reduced-mel:"):
        n = int(feature.split(":", 1)[1])
        if n < 1:
            raise ValueError("reduced-mel needs a positive component count")
        return "reduced-mel", n
    raise ValueError(f"unknown feature choice: {feature!r} (expected one of {FEATURE_CHOICES})")


class FeatureExtractor:
    """Maps clips (or raw log-mel matrices) to the matrices SPDP compares.

    For ``reduced-mel`` the PCA basis is fitted once, on the union of the
    endpoint frames, so every projection within one search shares it.
    """

    def __init__(self, x0: AudioClip, x1: AudioClip, feature: str = "log-mel",
                 stft: StftConfig = StftConfig()):
        self.kind, self.n_components = parse_feature(feature)
        self.stft = stft
        mel0, mel1 = log_mel(x0, stft), log_mel(x1, stft)
        self._pca = MelPca([mel0, mel1], self.n_components) if self.kind == "reduced-mel" else None
        if self.kind == "spectral-contrast":
            self.m0 = spectral_contrast(x0, stft)
            self.m1 = spectral_contrast(x1, stft)
        else:
            self.m0 = self.from_mel(mel0.values)
            self.m1 = self.from_mel(mel1.values)

    @property
    def mel_derivable(self) -> bool:
        """Whether matrices can be derived from a log-mel alone."""
        return self.kind != "spectral-contrast"

    def from_mel(self, mel_values: np.ndarray) -> np.ndarray:
        if self.kind == "log-mel":
            return np.asarray(mel_values, dtype=np.float64)
        if self.kind == "mfcc":
            return mfcc(mel_values, 13).values
        if self.kind == "reduced-mel":
            return self._pca.transform(mel_values)
        raise ValueError("spectral-contrast cannot be derived from a mel matrix")

    def from_clip(self, clip: AudioClip) -> np.ndarray:
        if self.kind == "spectral-contrast":
            return spectral_contrast(clip, self.stft)
        return self.from_mel(log_mel(clip, self.stft).values)


def spdp_from_matrices(m_alpha: np.ndarray, m0: np.ndarray, m1: np.ndarray) -> SpdpPoint:
    """Proportion point from precomputed feature matrices."""
    d0 = float(np.linalg.norm(m_alpha - m0))
    d1 = float(np.linalg.norm(m_alpha - m1))
    total = d0 + d1
    if total == 0.0:
        raise ValueError("endpoints coincide with the morph in feature space; SPDP undefined")
    return SpdpPoint(np.array([d0 / total, d1 / total]))


def spdp(
    x_alpha: AudioClip,
    x0: AudioClip,
    x1: AudioClip,
    feature: str = "log-mel",
    stft: StftConfig = StftConfig(),
) -> SpdpPoint:
    """Distance proportions of a morphed clip between the two originals."""
    ex = FeatureExtractor(x0, x1, feature, stft)
    return spdp_from_matrices(ex.from_clip(x_alpha), ex.m0, ex.m1)


def constant_spdp_targets(n_points: int) -> list[SpdpPoint]:
    """N proportion targets linearly spaced from [0,1] to [1,0]."""
    if n_points < 2:
        raise ValueError("need at least 2 points")
    ts = np.arange(n_points) / (n_points - 1)
    return [SpdpPoint(np.array([t, 1.0 - t])) for t in ts]


class _Evaluator:
    """Caches SPDP evaluations per alpha within one search.

    Uses the backend's feature-space oracle when it exists and the chosen
    feature can be derived from a log-mel matrix; otherwise generates audio
    and extracts features from it. Endpoint matrices always come from the
    prepared originals.
    """

    def __init__(self, backend, pair, cfg: SearchConfig):
        self.backend = backend
        self.extractor = FeatureExtractor(pair[0], pair[1], cfg.feature, cfg.stft)
        self._cache: dict[float, SpdpPoint] = {}

    def point(self, alpha: float) -> SpdpPoint:
        if alpha not in self._cache:
            mat = None
            if self.extractor.mel_derivable:
                mel = self.backend.morph_features(alpha)
                if mel is not None:
                    mat = self.extractor.from_mel(mel)
            if mat is None:
                mat = self.extractor.from_clip(self.backend.morph(alpha))
            self._cache[alpha] = spdp_from_matrices(mat, self.extractor.m0, self.extractor.m1)
        return self._cache[alpha]

    def p0(self, alpha: float) -> float:
        return float(self.point(alpha).p[0])


def _bisect_target(evaluator: _Evaluator, target_p0: float, lo: float, hi: float,
                   tol: float, max_iters: int) -> tuple[float, int, bool]:
    """One bisection run; returns (alpha, iterations, converged)."""
    mid = (lo + hi) / 2.0
    p_mid = evaluator.p0(mid)
    iters = 0
    while abs(p_mid - target_p0) > tol and iters < max_iters:
        if p_mid > target_p0:
            hi = mid
        else:
            lo = mid
        mid = (lo + hi) / 2.0
        p_mid = evaluator.p0(mid)
        iters += 1
    return mid, iters, abs(p_mid - target_p0) <= tol


def binary_search_alphas(backend, pair, cfg: SearchConfig = SearchConfig()) -> AlphaSchedule:
    """Find factors whose achieved proportions march in constant steps.

    Endpoints are fixed at 0 and 1; each interior target is solved by
    bisection on ``p[0]`` over [previous alpha, 1]. Comparisons use the
    first component only -- the second is redundant because the components
    sum to one. A target that fails to settle within ``max_iters`` keeps
    its last midpoint and is flagged unconverged.
    """
    targets = constant_spdp_targets(cfg.n_points)
    evaluator = _Evaluator(backend, pair, cfg)

    alphas = [0.0]
    iterations = [0]
    converged = [True]
    alpha_cur = 0.0
    for tgt in targets[1:-1]:
        alpha_cur, iters, ok = _bisect_target(
            evaluator, float(tgt.p[0]), alpha_cur, 1.0, cfg.tol, cfg.max_iters
        )
        alphas.append(alpha_cur)
        iterations.append(iters)
        converged.append(ok)
    if cfg.n_points >= 2:
        alphas.append(1.0)
        iterations.append(0)
        converged.append(True)

    achieved = [evaluator.point(a) for a in alphas]
    return AlphaSchedule(
        alphas=alphas,
        targets=targets,
        achieved=achieved,
        converged=converged,
        iterations=iterations,
        feature=cfg.feature,
        tol=cfg.tol,
    )


def search_single_target(backend, pair, target_p0: float, cfg: SearchConfig = SearchConfig()) -> AlphaSchedule:
    """Solve one interior proportion target (static morphing)."""
    if not 0.0 < target_p0 < 1.0:
        raise ValueError("target proportion must be strictly inside (0, 1)")
    evaluator = _Evaluator(backend, pair, cfg)
    alpha, iters, ok = _bisect_target(evaluator, target_p0, 0.0, 1.0, cfg.tol, cfg.max_iters)
    alphas = [0.0, alpha, 1.0]
    targets = [
        SpdpPoint(np.array([0.0, 1.0])),
        SpdpPoint(np.array([target_p0, 1.0 - target_p0])),
        SpdpPoint(np.array([1.0, 0.0])),
    ]
    return AlphaSchedule(
        alphas=alphas,
        targets=targets,
        achieved=[evaluator.point(a) for a in alphas],
        converged=[True, ok, True],
        iterations=[0, iters, 0],
        feature=cfg.feature,
        tol=cfg.tol,
    )
