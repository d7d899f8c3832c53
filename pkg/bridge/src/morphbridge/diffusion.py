"""Deterministic stepping and latent interpolation (torch side).

The reverse update is the standard deterministic one. Inversion runs the
same relation forward explicitly, evaluating the prediction at each
segment's upper time (gamma(0) = 1 makes noise predictions singular at
t = 0). For the wrapped model the reverse pass contracts onto the
embedded clean-latent estimate, so inversion here provides the starting
state's structure rather than an exact pre-image.
"""

from __future__ import annotations

import torch


def step_grid(n_schedule: int, steps: int) -> torch.Tensor:
    if not 1 <= steps <= n_schedule:
        raise ValueError("steps must be between 1 and the schedule length")
    return torch.round(torch.linspace(0, n_schedule, steps + 1)).long()


def slerp(z0: torch.Tensor, z1: torch.Tensor, alpha: float) -> torch.Tensor:
    if alpha == 0.0:
        return z0.clone()
    if alpha == 1.0:
        return z1.clone()
    f0, f1 = z0.flatten(), z1.flatten()
    n0, n1 = torch.linalg.norm(f0), torch.linalg.norm(f1)
    if n0 == 0 or n1 == 0:
        raise ValueError("slerp endpoints must be nonzero")
    cos_omega = torch.clamp(torch.dot(f0, f1) / (n0 * n1), -1.0, 1.0)
    omega = torch.arccos(cos_omega)
    if omega < 1e-6 or torch.pi - omega < 1e-6:
        return (1.0 - alpha) * z0 + alpha * z1
    s = torch.sin(omega)
    return (torch.sin((1.0 - alpha) * omega) / s) * z0 + (torch.sin(alpha * omega) / s) * z1


def ddim_denoise(z_t: torch.Tensor, eps_fn, gammas: torch.Tensor, steps: int) -> torch.Tensor:
    grid = step_grid(len(gammas) - 1, steps)
    z = z_t.clone()
    for k in range(len(grid) - 1, 0, -1):
        t_hi, t_lo = int(grid[k]), int(grid[k - 1])
        g_hi, g_lo = gammas[t_hi], gammas[t_lo]
        eps = eps_fn(z, t_hi)
        z = torch.sqrt(g_lo) * (z - torch.sqrt(1.0 - g_hi) * eps) / torch.sqrt(g_hi) \
            + torch.sqrt(1.0 - g_lo) * eps
    return z


def ddim_invert(z0: torch.Tensor, eps_fn, gammas: torch.Tensor, steps: int) -> torch.Tensor:
    grid = step_grid(len(gammas) - 1, steps)
    z = z0.clone()
    for k in range(len(grid) - 1):
        t_lo, t_hi = int(grid[k]), int(grid[k + 1])
        g_lo, g_hi = gammas[t_lo], gammas[t_hi]
        a = torch.sqrt(g_hi / g_lo)
        b = torch.sqrt(1.0 - g_hi) - torch.sqrt(g_hi * (1.0 - g_lo) / g_lo)
        z = a * z + b * eps_fn(z, t_hi)
    return z
