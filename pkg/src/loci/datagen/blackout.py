"""Blackout schedules: which frames of an episode the model does not get to see."""
from __future__ import annotations

import numpy as np

from loci.errors import ConfigError, ContractError

POLICIES = ("none", "fixed_p", "ramp")
SAFE_FRAMES = 10


def ramp_probability(progress: float, p_start: float, p_end: float) -> float:
    progress = min(max(progress, 0.0), 1.0)
    return p_start + (p_end - p_start) * progress


def blackout_schedule(length: int, policy: str, rng: np.random.Generator, *, p: float = 0.2, p_start: float = 0.1,
                      p_end: float = 0.45, progress: float = 0.0, safe_frames: int = SAFE_FRAMES) -> np.ndarray:
    """Boolean mask of blacked-out frames; the first ``safe_frames`` frames are never blacked out.

    ``ramp`` draws with a probability interpolated linearly from ``p_start`` to
    ``p_end`` over training ``progress`` in [0, 1].
    """
    if policy not in POLICIES:
        raise ConfigError(f"blackout policy: expected one of {', '.join(POLICIES)}, got {policy!r}")
    for name, val in (("p", p), ("p_start", p_start), ("p_end", p_end)):
        if not 0.0 <= val <= 1.0:
            raise ConfigError(f"blackout.{name}: expected float in [0, 1], got {val}")
    if policy == "none":
        return np.zeros(length, bool)
    if policy == "fixed_p" and length <= safe_frames:
        raise ContractError(f"fixed_p blackouts need more than {safe_frames} frames, got {length}")
    prob = p if policy == "fixed_p" else ramp_probability(progress, p_start, p_end)
    mask = rng.random(length) < prob
    mask[:safe_frames] = False
    return mask
