"""morphbridge: a generation service behind the pair/morph wire protocol.

The service registers a source/target audio pair (POST /pairs), runs the
preparation pipeline -- text-guided embedding optimization, low-rank model
adaptation with unconditional bias correction, and deterministic latent
inversion -- and then synthesizes audio at arbitrary morph factors
(POST /morph) by interpolating embeddings linearly, interpolating latent
states spherically, and denoising with a guided prediction.

The wrapped "pretrained" model is a deliberately small stand-in (see
``morphbridge.model``): every step of the pipeline is real, but the model
is sized for protocol and algorithm verification, not for generation
quality.
"""

__version__ = "0.1.0"
