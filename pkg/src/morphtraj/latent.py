"""Latent-side interpolation and deterministic diffusion stepping.

These operations act on plain ndarrays against an abstract noise
predictor: a callable ``predictor(z, t, embeddings_or_None) -> ndarray``
of the same shape as ``z``, deterministic for fixed inputs. Tests use
synthetic predictors; production realizes the contract over the wire.

The denoising update is the standard deterministic one. Inversion is its
exact per-segment pre-image: the explicit rescale-plus-noise form is used
as the initial guess and then refined by fixed-point iteration, so running
the two directions over the same step grid reproduces the input to
numerical precision rather than up to a discretization mismatch.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

_PARALLEL_EPS = 1e-6


@dataclass(frozen=True)
class EmbeddingSet:
    """Conditioning operands: a structured audio abstraction plus text."""

    loa: np.ndarray
    text: np.ndarray

    def __post_init__(self):
        for name in ("loa", "text"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite values in {name} embedding")
            object.__setattr__(self, name, arr)


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step noise fractions and their cumulative products.

    ``gamma(0) = 1`` corresponds to clean data; ``gamma(T)`` to the
    noisiest state. The cumulative products must decrease strictly.
    """

    betas: np.ndarray

    def __post_init__(self):
        betas = np.asarray(self.betas, dtype=np.float64)
        if betas.ndim != 1 or betas.size == 0:
            raise ValueError("betas must be a non-empty 1-D array")
        if np.any(betas <= 0) or np.any(betas >= 1):
            raise ValueError("betas must lie in (0, 1)")
        gammas = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
        if np.any(np.diff(gammas) >= 0) or np.any(gammas <= 0):
            raise ValueError("cumulative products must be strictly decreasing in (0, 1]")
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "gammas", gammas)

    def __len__(self) -> int:
        return self.betas.size

    def gamma(self, t: int) -> float:
        return float(self.gammas[t])


def linear_noise_schedule(n_steps: int = 1000, beta_start: float = 1e-4, beta_end: float = 2e-2) -> NoiseSchedule:
    """Standard linear-beta schedule."""
    return NoiseSchedule(np.linspace(beta_start, beta_end, n_steps))


def step_grid(sched: NoiseSchedule, steps: int) -> np.ndarray:
    """Uniform sub-sampling of the schedule into ``steps`` segments.

    Shared by inversion and denoising so the two walk identical segments.
    """
    if not 1 <= steps <= len(sched):
        raise ValueError("steps must be between 1 and the schedule length")
    return np.round(np.linspace(0, len(sched), steps + 1)).astype(int)


def slerp(z0: np.ndarray, z1: np.ndarray, alpha: float) -> np.ndarray:
    """Great-circle interpolation between two latent tensors.

    Falls back to linear interpolation when the vectors are within 1e-6
    radians of parallel or antiparallel (the antipodal case also warns,
    since the great circle is then ill-defined).
    """
    z0 = np.asarray(z0, dtype=np.float64)
    z1 = np.asarray(z1, dtype=np.float64)
    if z0.shape != z1.shape:
        raise ValueError(f"shape mismatch: {z0.shape} vs {z1.shape}")
    n0 = np.linalg.norm(z0)
    n1 = np.linalg.norm(z1)
    if n0 == 0 or n1 == 0:
        raise ValueError("slerp endpoints must be nonzero")
    if alpha == 0.0:
        return z0.copy()
    if alpha == 1.0:
        return z1.copy()
    cos_omega = np.clip(float(np.vdot(z0, z1)) / (n0 * n1), -1.0, 1.0)
    omega = np.arccos(cos_omega)
    if omega < _PARALLEL_EPS:
        return (1.0 - alpha) * z0 + alpha * z1
    if np.pi - omega < _PARALLEL_EPS:
        warnings.warn("slerp endpoints are nearly antipodal; falling back to lerp")
        return (1.0 - alpha) * z0 + alpha * z1
    s = np.sin(omega)
    return (np.sin((1.0 - alpha) * omega) / s) * z0 + (np.sin(alpha * omega) / s) * z1


def lerp_embeddings(e0: EmbeddingSet, e1: EmbeddingSet, alpha: float) -> EmbeddingSet:
    """Componentwise convex combination of both embedding parts."""
    if e0.loa.shape != e1.loa.shape or e0.text.shape != e1.text.shape:
        raise ValueError("embedding shapes do not match")
    return EmbeddingSet(
        loa=(1.0 - alpha) * e0.loa + alpha * e1.loa,
        text=(1.0 - alpha) * e0.text + alpha * e1.text,
    )


def _denoise_step(z_hi: np.ndarray, eps: np.ndarray, g_hi: float, g_lo: float) -> np.ndarray:
    return np.sqrt(g_lo) * (z_hi - np.sqrt(1.0 - g_hi) * eps) / np.sqrt(g_hi) + np.sqrt(1.0 - g_lo) * eps


def ddim_denoise(z_t, predictor, e, sched: NoiseSchedule, steps: int) -> np.ndarray:
    """Deterministic reverse pass from the noisiest grid point down to 0."""
    grid = step_grid(sched, steps)
    z = np.asarray(z_t, dtype=np.float64).copy()
    for k in range(len(grid) - 1, 0, -1):
        t_hi, t_lo = int(grid[k]), int(grid[k - 1])
        eps = np.asarray(predictor(z, t_hi, e))
        if eps.shape != z.shape:
            raise ValueError("predictor changed the latent shape")
        z = _denoise_step(z, eps, sched.gamma(t_hi), sched.gamma(t_lo))
    return z


def ddim_invert(
    z0,
    predictor,
    e,
    sched: NoiseSchedule,
    steps: int,
    fp_tol: float = 1e-13,
    fp_max_iters: int = 100,
) -> np.ndarray:
    """Deterministic forward mapping from clean data to its latent state.

    Each segment solves ``z_lo = denoise_step(z_hi)`` for ``z_hi``: the
    explicit update with the predictor frozen at the lower point seeds a
    fixed-point iteration that converges when the predictor's sensitivity
    to its state is moderate on the grid's segments. This keeps inversion
    and denoising exact mutual inverses on the same grid.
    """
    grid = step_grid(sched, steps)
    z = np.asarray(z0, dtype=np.float64).copy()
    for k in range(len(grid) - 1):
        t_lo, t_hi = int(grid[k]), int(grid[k + 1])
        g_lo, g_hi = sched.gamma(t_lo), sched.gamma(t_hi)
        a = np.sqrt(g_hi / g_lo)
        b = np.sqrt(1.0 - g_hi) - np.sqrt(g_hi * (1.0 - g_lo) / g_lo)
        z_hi = a * z + b * np.asarray(predictor(z, t_lo, e))
        for _ in range(fp_max_iters):
            z_new = a * z + b * np.asarray(predictor(z_hi, t_hi, e))
            if not np.all(np.isfinite(z_new)):
                raise RuntimeError("inversion diverged; predictor too stiff for this grid")
            delta = np.linalg.norm(z_new - z_hi)
            z_hi = z_new
            if delta <= fp_tol * (1.0 + np.linalg.norm(z_hi)):
                break
        else:
            raise RuntimeError("inversion fixed point did not converge; predictor too stiff for this grid")
        z = z_hi
    return z


def guided_noise(pred_adapted: np.ndarray, pred_uncond: np.ndarray, w: float) -> np.ndarray:
    """Mix adapted-conditional and unconditional predictions with weight w."""
    pred_adapted = np.asarray(pred_adapted)
    pred_uncond = np.asarray(pred_uncond)
    if pred_adapted.shape != pred_uncond.shape:
        raise ValueError("prediction shapes do not match")
    return w * pred_adapted + (1.0 - w) * pred_uncond


def guided_predictor(adapted, uncond, w: float):
    """Bundle two predictors into one guided callable (embeddings go only
    to the adapted branch; the unconditional branch sees None)."""

    def predict(z, t, e):
        return guided_noise(adapted(z, t, e), uncond(z, t, None), w)

    return predict
