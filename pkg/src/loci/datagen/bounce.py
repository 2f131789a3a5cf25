"""Bouncing balls in a walled box, with or without ball-ball collisions."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from loci.datagen.episode import SCENARIO_CODES, Episode, render_episode
from loci.datagen.render import OBJECT, PALETTE, PURE_PALETTE, dark_background, disc_coverage
from loci.errors import ConfigError


@dataclass
class BounceConfig:
    height: int = 32
    width: int = 32
    length: int = 40
    balls: int = 3
    radius: float = 3.0
    speed: float = 1.0
    collide: bool = True
    pure: bool = False  # black background and saturated 0/1 colours (zero-entropy pixel targets)

    def validate(self) -> "BounceConfig":
        if not 2 <= self.balls <= 4:
            raise ConfigError(f"balls: expected 2..4, got {self.balls}")
        if self.radius <= 0 or 2 * self.radius >= min(self.height, self.width) - 1:
            raise ConfigError(f"radius: {self.radius} too large for a {self.height}x{self.width} canvas")
        if self.length < 1 or self.speed < 0:
            raise ConfigError("length must be >= 1 and speed >= 0")
        return self


def wall_limits(cfg: BounceConfig):
    """Allowed centre range ``((x_lo, x_hi), (y_lo, y_hi))``; pixel edges sit at -0.5 and size - 0.5."""
    r = cfg.radius
    return (r - 0.5, cfg.width - 0.5 - r), (r - 0.5, cfg.height - 0.5 - r)


def _reflect(x: np.ndarray, v: np.ndarray, lo: float, hi: float):
    below, above = x < lo, x > hi
    x = np.where(below, 2 * lo - x, np.where(above, 2 * hi - x, x))
    v = np.where(below | above, -v, v)
    return x, v


def collide_pairs(pos: np.ndarray, vel: np.ndarray, radius: float) -> np.ndarray:
    """Equal-mass elastic collisions: approaching overlapping pairs exchange their normal velocity components."""
    vel = vel.copy()
    n = len(pos)
    for i in range(n):
        for j in range(i + 1, n):
            d = pos[j] - pos[i]
            dist = float(np.hypot(*d))
            if dist >= 2 * radius or dist == 0:
                continue
            normal = d / dist
            closing = float(np.dot(vel[i] - vel[j], normal))
            if closing <= 0:
                continue
            vel[i] -= closing * normal
            vel[j] += closing * normal
    return vel


def simulate(pos0, vel0, cfg: BounceConfig, steps: int):
    """Integrate ``steps`` frames; returns positions and velocities, each (steps, n, 2)."""
    (xlo, xhi), (ylo, yhi) = wall_limits(cfg)
    pos = np.array(pos0, float)
    vel = np.array(vel0, float)
    out_p, out_v = np.zeros((steps,) + pos.shape), np.zeros((steps,) + vel.shape)
    for t in range(steps):
        out_p[t], out_v[t] = pos, vel
        pos = pos + vel
        pos[:, 0], vel[:, 0] = _reflect(pos[:, 0], vel[:, 0], xlo, xhi)
        pos[:, 1], vel[:, 1] = _reflect(pos[:, 1], vel[:, 1], ylo, yhi)
        if cfg.collide:
            vel = collide_pairs(pos, vel, cfg.radius)
    return out_p, out_v


def _initial(cfg: BounceConfig, rng: np.random.Generator):
    (xlo, xhi), (ylo, yhi) = wall_limits(cfg)
    for _ in range(1000):
        pos = np.stack([rng.uniform(xlo, xhi, cfg.balls), rng.uniform(ylo, yhi, cfg.balls)], axis=1)
        gaps = [np.hypot(*(pos[i] - pos[j])) for i in range(cfg.balls) for j in range(i + 1, cfg.balls)]
        if min(gaps) > 2 * cfg.radius + 1:
            break
    else:
        raise ConfigError(f"cannot place {cfg.balls} balls of radius {cfg.radius} without overlap")
    angle = rng.uniform(0, 2 * np.pi, cfg.balls)
    vel = cfg.speed * np.stack([np.cos(angle), np.sin(angle)], axis=1)
    return pos, vel


def gen_bounce(cfg: BounceConfig, rng: np.random.Generator) -> Episode:
    cfg.validate()
    pos0, vel0 = _initial(cfg, rng)
    palette = PURE_PALETTE if cfg.pure else PALETTE
    colors = palette[rng.permutation(len(palette))[: cfg.balls]]
    background = dark_background(rng, cfg.height, cfg.width)
    if cfg.pure:
        background = np.zeros_like(background)
    traj, _ = simulate(pos0, vel0, cfg, cfg.length)
    frames = []
    for t in range(cfg.length):
        shapes = []
        for k in range(cfg.balls):
            cx, cy = traj[t, k]
            cov = disc_coverage(cx, cy, cfg.radius, cfg.height, cfg.width)
            # without collisions each ball lives on its own depth plane
            shapes.append((k, cov, colors[k], float(k), (cx, cy)))
        frames.append(shapes)
    kind = "bounce-collision" if cfg.collide else "bounce-noncollision"
    return render_episode(background, frames, [OBJECT] * cfg.balls, SCENARIO_CODES[kind])
