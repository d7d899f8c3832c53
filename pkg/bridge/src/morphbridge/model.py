"""The wrapped generation model and its adaptation machinery.

A stand-in for a pretrained latent diffusion model, small enough to run on
CPU in a test session while keeping every pipeline stage real:

- the noise predictor estimates the clean latent from the conditioning and
  converts it to a noise estimate through the forward-process identity;
- conditioning is a structured audio abstraction (same layout as the
  latent) plus a pooled sentence embedding;
- adaptation injects trainable rank-r factors on the conditional pathway
  and a rank-r0 factored correction on the unconditional one, leaving the
  base weights frozen;
- all training minimizes the standard denoising objective
  ``E ||eps_hat(z_t, E, t) - eps||^2`` with torch autograd.

The clean-latent estimate does not depend on the noisy state, so denoising
trajectories collapse onto the embedded estimate -- adequate for protocol
and algorithm verification, documented as non-generative.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

N_BANDS = 64
TEXT_ROWS = 8
TEXT_DIM = 32
TEXT_GAIN = 0.1

MODEL_SEED = 1234
MODEL_ID = "mel-affine-ldm-64"

DEFAULT_SCHEDULE_STEPS = 1000


def noise_schedule(n_steps: int = DEFAULT_SCHEDULE_STEPS) -> torch.Tensor:
    """gamma(t) for t = 0..T: cumulative products of a linear-beta schedule."""
    betas = torch.linspace(1e-4, 2e-2, n_steps, dtype=torch.float64)
    return torch.cat([torch.ones(1, dtype=torch.float64), torch.cumprod(1.0 - betas, dim=0)])


@dataclass
class Embeddings:
    """Conditioning operands: audio abstraction (loa) + text rows."""

    loa: torch.Tensor   # (frames, N_BANDS)
    text: torch.Tensor  # (TEXT_ROWS, TEXT_DIM)

    def detached(self) -> "Embeddings":
        return Embeddings(self.loa.detach().clone(), self.text.detach().clone())

    def lerp(self, other: "Embeddings", alpha: float) -> "Embeddings":
        return Embeddings(
            (1.0 - alpha) * self.loa + alpha * other.loa,
            (1.0 - alpha) * self.text + alpha * other.text,
        )


def init_embeddings(prompt: str, frames: int, seed: int) -> Embeddings:
    """Prompt-conditioned starting point for the optimization.

    The prompt stands in for the text encoders: it seeds a deterministic
    draw, so equal prompts give equal initializations.
    """
    g = torch.Generator().manual_seed((hash_prompt(prompt) ^ seed) & 0x7FFFFFFF)
    loa = 0.05 * torch.randn(frames, N_BANDS, generator=g, dtype=torch.float64)
    text = 0.05 * torch.randn(TEXT_ROWS, TEXT_DIM, generator=g, dtype=torch.float64)
    return Embeddings(loa, text)


def hash_prompt(prompt: str) -> int:
    import hashlib

    return int.from_bytes(hashlib.sha256(prompt.encode()).digest()[:4], "little")


class BridgeModel:
    """Frozen base weights plus the trainable adaptation parameters."""

    def __init__(self, lora_rank: int = 4, bias_rank: int = 2, seed: int = MODEL_SEED):
        g = torch.Generator().manual_seed(seed)
        # frozen "pretrained" weights: near-identity band mixer + text head
        self.w_y = torch.eye(N_BANDS, dtype=torch.float64) + 0.01 * torch.randn(
            N_BANDS, N_BANDS, generator=g, dtype=torch.float64
        )
        self.w_text = torch.randn(N_BANDS, TEXT_DIM, generator=g, dtype=torch.float64) / np.sqrt(TEXT_DIM)
        self.uncond_base = torch.zeros(N_BANDS, dtype=torch.float64)
        # low-rank trainable corrections, zero-initialized on the outer factor
        # so adaptation starts exactly at the frozen model
        self.lora_a = 0.1 * torch.randn(lora_rank, N_BANDS, generator=g, dtype=torch.float64)
        self.lora_b = torch.zeros(N_BANDS, lora_rank, dtype=torch.float64)
        self.bias_a = 0.1 * torch.randn(bias_rank, 1, generator=g, dtype=torch.float64)
        self.bias_b = torch.zeros(N_BANDS, bias_rank, dtype=torch.float64)
        self.gammas = noise_schedule()

    # -- parameter access ---------------------------------------------------

    def adaptation_state(self) -> dict:
        return {
            "lora_a": self.lora_a.numpy(),
            "lora_b": self.lora_b.numpy(),
            "bias_a": self.bias_a.numpy(),
            "bias_b": self.bias_b.numpy(),
        }

    def load_adaptation_state(self, state: dict) -> None:
        self.lora_a = torch.as_tensor(np.asarray(state["lora_a"]), dtype=torch.float64)
        self.lora_b = torch.as_tensor(np.asarray(state["lora_b"]), dtype=torch.float64)
        self.bias_a = torch.as_tensor(np.asarray(state["bias_a"]), dtype=torch.float64)
        self.bias_b = torch.as_tensor(np.asarray(state["bias_b"]), dtype=torch.float64)

    def gamma(self, t) -> torch.Tensor:
        return self.gammas[t]

    # -- clean-latent estimates ----------------------------------------------

    def estimate_conditional(self, e: Embeddings, adapted: bool = True) -> torch.Tensor:
        w = self.w_y + (self.lora_b @ self.lora_a if adapted else 0.0)
        pooled = e.text.mean(dim=0) @ self.w_text.T
        return e.loa @ w.T + TEXT_GAIN * pooled

    def estimate_unconditional(self, frames: int, adapted: bool = True) -> torch.Tensor:
        bias = self.uncond_base + ((self.bias_b @ self.bias_a).squeeze(-1) if adapted else 0.0)
        return bias.expand(frames, N_BANDS)

    # -- noise predictions ----------------------------------------------------

    def _eps_from_estimate(self, z_t: torch.Tensor, t, estimate: torch.Tensor) -> torch.Tensor:
        g = self.gamma(t)
        return (z_t - torch.sqrt(g) * estimate) / torch.sqrt(1.0 - g)

    def eps_conditional(self, z_t: torch.Tensor, t, e: Embeddings, adapted: bool = True) -> torch.Tensor:
        return self._eps_from_estimate(z_t, t, self.estimate_conditional(e, adapted))

    def eps_unconditional(self, z_t: torch.Tensor, t, adapted: bool = True) -> torch.Tensor:
        return self._eps_from_estimate(z_t, t, self.estimate_unconditional(z_t.shape[0], adapted))

    def eps_guided(self, z_t: torch.Tensor, t, e: Embeddings, w: float) -> torch.Tensor:
        return w * self.eps_conditional(z_t, t, e) + (1.0 - w) * self.eps_unconditional(z_t, t)

    # -- denoising objective ----------------------------------------------------

    def dpm_loss(self, z0: torch.Tensor, eps_fn, t: int, eps: torch.Tensor) -> torch.Tensor:
        """|| eps_hat(z_t, t) - eps ||^2 with z_t from the forward identity."""
        g = self.gamma(t)
        z_t = torch.sqrt(g) * z0 + torch.sqrt(1.0 - g) * eps
        return torch.sum((eps_fn(z_t, t) - eps) ** 2)
