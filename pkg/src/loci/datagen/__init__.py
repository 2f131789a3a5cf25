"""Synthetic scenario generators with exact ground truth."""
from __future__ import annotations

import numpy as np

from loci.datagen.blackout import POLICIES, blackout_schedule, ramp_probability
from loci.datagen.bounce import BounceConfig, gen_bounce
from loci.datagen.container import load, save
from loci.datagen.episode import SCENARIO_CODES, SCENARIOS, Dataset, Episode
from loci.datagen.vanish import VanishConfig, gen_vanish, occlusion_ratio
from loci.errors import ConfigError


def episode_rngs(seed: int, episodes: int) -> list[np.random.Generator]:
    """One independent generator per episode, so episode i depends only on (seed, i)."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(episodes)]


def generate(scenario: str, episodes: int, seed: int = 0, *, height: int = 32, width: int = 32,
             length: int | None = None, objects: int | None = None, pure: bool = False) -> Dataset:
    if scenario not in SCENARIOS:
        raise ConfigError(f"scenario: expected one of {', '.join(SCENARIOS)}, got {scenario!r}")
    if episodes < 1:
        raise ConfigError("episodes: expected int >= 1")
    scale = min(height, width) / 32.0  # shape sizes follow the canvas
    out = []
    for rng in episode_rngs(seed, episodes):
        if scenario.startswith("bounce"):
            cfg = BounceConfig(height=height, width=width, collide=scenario == "bounce-collision",
                               pure=pure, radius=3.0 * scale)
            if length is not None:
                cfg.length = length
            if objects is not None:
                cfg.balls = objects
            out.append(gen_bounce(cfg, rng))
        else:
            cfg = VanishConfig(height=height, width=width, size=6.0 * scale)
            if length is not None:
                cfg.length = length
            if objects is not None:
                cfg.objects = objects
            out.append(gen_vanish(cfg, rng, surprise=scenario == "vanish-surprise"))
    return Dataset.stack(out)


__all__ = ["BounceConfig", "Dataset", "Episode", "POLICIES", "SCENARIOS", "SCENARIO_CODES", "VanishConfig",
           "blackout_schedule", "episode_rngs", "gen_bounce", "gen_vanish", "generate", "load", "occlusion_ratio",
           "ramp_probability", "save"]
