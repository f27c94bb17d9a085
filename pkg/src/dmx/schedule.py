"""Noise level parameterization and the forward corruption process.

A schedule maps a continuous time s in [0, 1] to a noise level sigma_s
with signal scale gamma_s = sqrt(1 - sigma_s^2); corrupting a video at
time s mixes it with unit Gaussian noise as gamma_s * v + sigma_s * eps,
which preserves unit variance at every time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rng
from .errors import InvalidArgumentError
from .video_core import VideoTensor

SCHEDULE_KINDS = ("cosine", "linear")


@dataclass(frozen=True)
class NoiseSchedule:
    """Monotone map s -> (sigma_s, gamma_s) with exact endpoints.

    The default "cosine" kind uses sigma_s = sin(s * pi / 2); "linear"
    uses sigma_s = s. gamma is always computed as sqrt(1 - sigma^2) so
    the variance identity holds to rounding and both endpoints are exact.
    """

    kind: str = "cosine"

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise InvalidArgumentError(
                f"unknown schedule kind {self.kind!r}, expected one of {SCHEDULE_KINDS}"
            )

    def sigma_at(self, s: float) -> tuple[float, float]:
        """(sigma_s, gamma_s) at time s in [0, 1]."""
        s = float(s)
        if not (0.0 <= s <= 1.0):
            raise InvalidArgumentError(f"time s must lie in [0, 1], got {s}")
        if s == 0.0:
            return 0.0, 1.0
        if s == 1.0:
            return 1.0, 0.0
        if self.kind == "cosine":
            sigma = math.sin(s * math.pi / 2.0)
        else:
            sigma = s
        sigma = min(max(sigma, 0.0), 1.0)
        gamma = math.sqrt(max(0.0, 1.0 - sigma * sigma))
        return sigma, gamma


DEFAULT_SCHEDULE = NoiseSchedule("cosine")


def corrupt(
    v: VideoTensor,
    s: float,
    seed: int,
    schedule: NoiseSchedule = DEFAULT_SCHEDULE,
) -> tuple[VideoTensor, VideoTensor]:
    """Draw eps ~ N(0, I) from ``seed`` and return (gamma_s v + sigma_s eps, eps).

    Deterministic in (v, s, seed); s=0 returns v bit-exactly and s=1
    returns eps bit-exactly.
    """
    sigma, gamma = schedule.sigma_at(s)
    eps = rng.normal(v.shape, seed, "corrupt", dtype=np.float32)
    z = np.float32(gamma) * v.data + np.float32(sigma) * eps
    return VideoTensor(z, fps=v.fps), VideoTensor(eps, fps=v.fps)
