"""morphtraj: sound morphing with perceptually uniform morph-factor schedules.

The library is organized around a small pipeline:

- :mod:`morphtraj.audio` loads/writes WAV clips and prepares equal-length
  pairs at the canonical 16 kHz rate.
- :mod:`morphtraj.features` computes log-mel spectrograms, MFCCs and the
  timbre descriptors everything else is built on.
- :mod:`morphtraj.backends` defines the morph-generator contract plus
  synthetic generators and an HTTP client for remote diffusion services.
- :mod:`morphtraj.spdp` finds morph factors whose distance-proportion
  increments are constant, via bisection over a monotone curve.
- :mod:`morphtraj.modes` assembles static, cyclostationary and dynamic
  morphs from a backend and a factor schedule.
- :mod:`morphtraj.evaluate` scores trajectories (correspondence,
  intermediateness, smoothness, reconstruction).
- :mod:`morphtraj.cli` ties it together for reproducible runs.
"""

from morphtraj.audio import AudioClip, load_wav, prepare_pair, resample, write_wav
from morphtraj.features import LogMelSpectrogram, StftConfig, log_mel, mfcc
from morphtraj.spdp import (
    AlphaSchedule,
    SearchConfig,
    SpdpPoint,
    binary_search_alphas,
    constant_spdp_targets,
    spdp,
)

__version__ = "0.1.0"

__all__ = [
    "AudioClip",
    "load_wav",
    "write_wav",
    "resample",
    "prepare_pair",
    "StftConfig",
    "LogMelSpectrogram",
    "log_mel",
    "mfcc",
    "SpdpPoint",
    "SearchConfig",
    "AlphaSchedule",
    "spdp",
    "constant_spdp_targets",
    "binary_search_alphas",
    "__version__",
]
