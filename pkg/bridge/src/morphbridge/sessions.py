"""Pair sessions: preparation pipeline, persistence, and generation.

Preparation (once per pair, seeded, persisted to disk):

1. encode both clips into latents;
2. optimize each clip's conditional embeddings by gradient descent on the
   denoising objective (text-guided: the prompt seeds the starting point);
3. adapt the model with low-rank trainable factors on the conditional
   pathway, then train the unconditional low-rank bias correction;
4. invert both latents to their starting states on the generation grid.

Generation at a factor interpolates embeddings linearly and starting
states spherically, then denoises with the guided prediction and decodes.
Everything is deterministic for a fixed session, so repeated requests
produce identical bytes and a reloaded session reproduces them.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from morphbridge import dsp
from morphbridge.diffusion import ddim_denoise, ddim_invert, slerp
from morphbridge.model import MODEL_SEED, BridgeModel, Embeddings, init_embeddings

DEFAULT_OPTS = {
    "t_inv": 500,        # embedding-optimization steps (unreported upstream; logged)
    "t_adapt": 150,      # low-rank adaptation steps
    "t_bias": 15,        # unconditional bias-correction steps
    "lora_rank": 4,
    "lora_rank_uncond": 2,
    "lr_embed": 0.1,     # eta_1 (unreported upstream; logged); decays 10x for the tail
    "lr_adapt": 1e-3,    # eta_2
    "ddim_steps": 100,
    "guidance_w": 1.0,   # wrapped model's convention; exposed because unreported
    "seed": 0,
}

_INT_OPTS = {"t_inv", "t_adapt", "t_bias", "lora_rank", "lora_rank_uncond", "ddim_steps", "seed"}


def resolve_opts(opt: dict | None) -> dict:
    opts = dict(DEFAULT_OPTS)
    for key, value in (opt or {}).items():
        if key not in DEFAULT_OPTS:
            raise ValueError(f"unknown option: {key!r}")
        opts[key] = int(value) if key in _INT_OPTS else float(value)
    for key in ("t_inv", "t_adapt", "lora_rank", "ddim_steps"):
        if opts[key] < 1:
            raise ValueError(f"option {key} must be >= 1")
    return opts


def pair_fingerprint(source_b64: str, target_b64: str, prompt: str, opts: dict) -> str:
    digest = hashlib.sha256()
    for part in (source_b64, target_b64, prompt, json.dumps(opts, sort_keys=True)):
        digest.update(part.encode())
        digest.update(b"\x00")
    return digest.hexdigest()[:16]


@dataclass
class PairSession:
    pair_id: str
    opts: dict
    prompt: str
    length: int
    model: BridgeModel
    x0: np.ndarray
    x1: np.ndarray
    e0: Embeddings
    e1: Embeddings
    z_t0: torch.Tensor
    z_t1: torch.Tensor
    embed_loss_log: list = field(default_factory=list)
    adapt_loss_log: list = field(default_factory=list)

    # -- generation -----------------------------------------------------------

    def generate(self, alpha: float) -> np.ndarray:
        if not 0.0 <= alpha <= 1.0:
            raise ValueError("alpha must be in [0, 1]")
        e_alpha = self.e0.lerp(self.e1, alpha)
        z_start = slerp(self.z_t0, self.z_t1, alpha)
        w = self.opts["guidance_w"]
        eps_fn = lambda z, t: self.model.eps_guided(z, t, e_alpha, w)
        z0 = ddim_denoise(z_start, eps_fn, self.model.gammas, self.opts["ddim_steps"])
        return dsp.decode_latent(z0.numpy(), self.length)

    # -- persistence ------------------------------------------------------------

    def save(self, root: Path) -> None:
        path = root / self.pair_id
        path.mkdir(parents=True, exist_ok=True)
        np.savez(
            path / "arrays.npz",
            x0=self.x0,
            x1=self.x1,
            loa0=self.e0.loa.numpy(),
            text0=self.e0.text.numpy(),
            loa1=self.e1.loa.numpy(),
            text1=self.e1.text.numpy(),
            z_t0=self.z_t0.numpy(),
            z_t1=self.z_t1.numpy(),
            **self.model.adaptation_state(),
        )
        meta = {
            "pair_id": self.pair_id,
            "opts": self.opts,
            "prompt": self.prompt,
            "length": self.length,
            "embed_loss_log": self.embed_loss_log,
            "adapt_loss_log": self.adapt_loss_log,
        }
        (path / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))

    @classmethod
    def load(cls, root: Path, pair_id: str) -> "PairSession":
        path = root / pair_id
        meta = json.loads((path / "meta.json").read_text())
        arrays = np.load(path / "arrays.npz")
        model = BridgeModel(meta["opts"]["lora_rank"], meta["opts"]["lora_rank_uncond"], MODEL_SEED)
        model.load_adaptation_state({k: arrays[k] for k in ("lora_a", "lora_b", "bias_a", "bias_b")})
        tt = lambda key: torch.as_tensor(arrays[key], dtype=torch.float64)
        return cls(
            pair_id=meta["pair_id"],
            opts=meta["opts"],
            prompt=meta["prompt"],
            length=meta["length"],
            model=model,
            x0=arrays["x0"],
            x1=arrays["x1"],
            e0=Embeddings(tt("loa0"), tt("text0")),
            e1=Embeddings(tt("loa1"), tt("text1")),
            z_t0=tt("z_t0"),
            z_t1=tt("z_t1"),
            embed_loss_log=meta["embed_loss_log"],
            adapt_loss_log=meta["adapt_loss_log"],
        )


# -----------------------------------------------------------------------------
# Preparation pipeline
# -----------------------------------------------------------------------------


def _optimize_embeddings(model, z0, e, steps, lr, generator):
    """Gradient descent on the denoising loss w.r.t. the embeddings.

    Returns the optimized embeddings plus a per-step evaluation loss
    (reconstruction residual at a fixed scale, so the log is comparable
    across steps even though training samples random (t, eps) pairs).
    """
    loa = e.loa.clone().requires_grad_(True)
    text = e.text.clone().requires_grad_(True)
    # beta2 = 0.9: the objective's scale swings many orders of magnitude with
    # the sampled timestep, and a slow second moment would stall every time a
    # low-t sample spikes it
    opt = torch.optim.Adam([loa, text], lr=lr, betas=(0.9, 0.9))
    n_t = len(model.gammas) - 1
    log = []
    for step in range(steps):
        if step == int(0.8 * steps):  # settle near the optimum
            for group in opt.param_groups:
                group["lr"] = lr * 0.1
        t = int(torch.randint(1, n_t + 1, (1,), generator=generator))
        eps = torch.randn(z0.shape, generator=generator, dtype=torch.float64)
        current = Embeddings(loa, text)
        loss = model.dpm_loss(z0, lambda z, tt: model.eps_conditional(z, tt, current, adapted=False), t, eps)
        opt.zero_grad()
        loss.backward()
        opt.step()
        with torch.no_grad():
            residual = torch.sum((model.estimate_conditional(Embeddings(loa, text), adapted=False) - z0) ** 2)
        log.append(float(residual))
    return Embeddings(loa.detach(), text.detach()), log


def _adapt_model(model, z0_0, z0_1, e0, e1, opts, generator):
    """Low-rank adaptation on the conditional pathway, then the
    unconditional bias correction; both on the denoising loss."""
    model.lora_a.requires_grad_(True)
    model.lora_b.requires_grad_(True)
    opt = torch.optim.Adam([model.lora_a, model.lora_b], lr=opts["lr_adapt"])
    n_t = len(model.gammas) - 1
    log = []
    for _ in range(opts["t_adapt"]):
        t = int(torch.randint(1, n_t + 1, (1,), generator=generator))
        eps0 = torch.randn(z0_0.shape, generator=generator, dtype=torch.float64)
        eps1 = torch.randn(z0_1.shape, generator=generator, dtype=torch.float64)
        loss = model.dpm_loss(z0_0, lambda z, tt: model.eps_conditional(z, tt, e0), t, eps0) \
            + model.dpm_loss(z0_1, lambda z, tt: model.eps_conditional(z, tt, e1), t, eps1)
        opt.zero_grad()
        loss.backward()
        opt.step()
        log.append(float(loss.detach()))
    model.lora_a.requires_grad_(False)
    model.lora_b.requires_grad_(False)

    model.bias_a.requires_grad_(True)
    model.bias_b.requires_grad_(True)
    opt = torch.optim.Adam([model.bias_a, model.bias_b], lr=opts["lr_adapt"])
    for _ in range(opts["t_bias"]):
        t = int(torch.randint(1, n_t + 1, (1,), generator=generator))
        eps0 = torch.randn(z0_0.shape, generator=generator, dtype=torch.float64)
        eps1 = torch.randn(z0_1.shape, generator=generator, dtype=torch.float64)
        loss = model.dpm_loss(z0_0, lambda z, tt: model.eps_unconditional(z, tt), t, eps0) \
            + model.dpm_loss(z0_1, lambda z, tt: model.eps_unconditional(z, tt), t, eps1)
        opt.zero_grad()
        loss.backward()
        opt.step()
    model.bias_a.requires_grad_(False)
    model.bias_b.requires_grad_(False)
    return log


def prepare_session(pair_id: str, x0: np.ndarray, x1: np.ndarray, prompt: str, opts: dict) -> PairSession:
    # equalize lengths (trailing silence) so the latents share a frame count
    n = max(x0.size, x1.size)
    if n < dsp.N_FFT:
        raise ValueError("clips too short for analysis")
    x0 = np.pad(x0, (0, n - x0.size))
    x1 = np.pad(x1, (0, n - x1.size))

    model = BridgeModel(opts["lora_rank"], opts["lora_rank_uncond"], MODEL_SEED)
    z0_0 = torch.as_tensor(dsp.encode_latent(x0), dtype=torch.float64)
    z0_1 = torch.as_tensor(dsp.encode_latent(x1), dtype=torch.float64)
    generator = torch.Generator().manual_seed(opts["seed"] & 0x7FFFFFFF)

    frames = z0_0.shape[0]
    e0, log0 = _optimize_embeddings(model, z0_0, init_embeddings(prompt, frames, opts["seed"]),
                                    opts["t_inv"], opts["lr_embed"], generator)
    e1, log1 = _optimize_embeddings(model, z0_1, init_embeddings(prompt, frames, opts["seed"] + 1),
                                    opts["t_inv"], opts["lr_embed"], generator)
    adapt_log = _adapt_model(model, z0_0, z0_1, e0, e1, opts, generator)

    with torch.no_grad():
        w = opts["guidance_w"]
        invert = lambda z0, e: ddim_invert(
            z0, lambda z, t: model.eps_guided(z, t, e, w), model.gammas, opts["ddim_steps"]
        )
        z_t0 = invert(z0_0, e0)
        z_t1 = invert(z0_1, e1)

    return PairSession(
        pair_id=pair_id,
        opts=opts,
        prompt=prompt,
        length=n,
        model=model,
        x0=x0,
        x1=x1,
        e0=e0,
        e1=e1,
        z_t0=z_t0,
        z_t1=z_t1,
        embed_loss_log=[log0, log1],
        adapt_loss_log=adapt_log,
    )
