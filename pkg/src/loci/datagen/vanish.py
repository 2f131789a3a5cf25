"""Objects traverse behind a central screen; in the surprise condition one of them never comes back."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from loci.datagen.episode import SCENARIO_CODES, Episode, render_episode
from loci.datagen.render import OBJECT, OCCLUDER, PALETTE, dark_background, disc_coverage, rect_coverage
from loci.errors import ConfigError

FALL_FRAMES = 5
SCREEN_MARGIN = 2.0  # rows kept free above and below the screen
SCREEN_COLOR = np.array([0.62, 0.6, 0.55])


@dataclass
class VanishConfig:
    height: int = 32
    width: int = 32
    length: int = 50
    objects: int = 2
    size: float = 6.0  # disc diameter or square side, pixels
    occlusion: float = 0.25  # fraction of an object's on-screen lifetime spent fully hidden
    max_delay: int = 3  # random entry delay per object, frames
    tail: int = 3  # frames after the screen has fallen

    def screen_width(self) -> int:
        """Screen width in whole pixel columns.

        A shape spanning ``size`` columns owns pixels for ``width + size - 1``
        one-pixel steps of travel and is fully hidden for ``screen - size + 1``
        of them.
        """
        return int(round(self.occlusion * (self.width + self.size - 1) + self.size - 1))

    def validate(self) -> "VanishConfig":
        if self.objects not in (1, 2):
            raise ConfigError(f"objects: expected 1 or 2, got {self.objects}")
        if not 0 < self.occlusion < 1:
            raise ConfigError("occlusion: expected a fraction in (0, 1)")
        if self.screen_width() > self.width - 2 or self.screen_width() <= self.size:
            raise ConfigError(f"occlusion {self.occlusion} unreachable: screen of width {self.screen_width()} "
                              f"does not fit a {self.width}-pixel canvas")
        lanes = (self.height - 2 * SCREEN_MARGIN) / self.objects
        if self.size + 1 > lanes:
            raise ConfigError(f"size {self.size} too large for {self.objects} lanes of {lanes:.1f} pixels")
        if self.travel_frames() < 4:
            raise ConfigError(f"length {self.length} too short for a traversal plus a {FALL_FRAMES}-frame fall")
        return self

    def fall_start(self) -> int:
        return self.length - FALL_FRAMES - self.tail

    def travel_frames(self) -> int:
        return self.fall_start() - self.max_delay - 1


def _shape_coverage(square: bool, cx, cy, size, h, w):
    if square:
        half = size / 2
        return rect_coverage(cx - half, cy - half, cx + half, cy + half, h, w)
    return disc_coverage(cx, cy, size / 2, h, w)


def gen_vanish(cfg: VanishConfig, rng: np.random.Generator, surprise: bool) -> Episode:
    """Control and surprise episodes drawn with the same generator state differ only in the removal."""
    cfg.validate()
    h, w, d = cfg.height, cfg.width, cfg.size
    # every object must cross the full canvas before the screen falls
    span = w + d
    v_min = span / cfg.travel_frames()
    speed = rng.uniform(v_min, 1.25 * v_min)
    n = cfg.objects
    delays = rng.integers(0, cfg.max_delay + 1, size=n)
    lane_h = (h - 2 * SCREEN_MARGIN) / n
    rows = np.array([SCREEN_MARGIN - 0.5 + lane_h * (i + 0.5) + rng.uniform(-1, 1) * max(lane_h - d - 1, 0) / 2
                     for i in range(n)])
    first = int(rng.integers(2))
    dirs = np.array([1.0 if (i + first) % 2 == 0 else -1.0 for i in range(n)])
    squares = rng.random(n) < 0.5
    colors = PALETTE[rng.permutation(len(PALETTE))[:n]]
    target = int(rng.integers(n))
    background = dark_background(rng, h, w)

    sw = cfg.screen_width()
    sx0 = (w - sw) // 2 - 0.5  # edges on pixel boundaries
    sx1 = sx0 + sw
    sy0, sy1 = SCREEN_MARGIN - 0.5, h - 0.5 - SCREEN_MARGIN
    fall = cfg.fall_start()

    def centre(i, t):
        start = -0.5 - d / 2 if dirs[i] > 0 else w - 0.5 + d / 2
        return start + dirs[i] * speed * (t - delays[i] + 1), rows[i]

    def screen_cov(t):
        if t < fall:
            top = sy0
        else:
            top = sy0 + (sy1 - sy0) * min(t - fall + 1, FALL_FRAMES) / FALL_FRAMES
        if top >= sy1:
            return np.zeros((h, w))
        return rect_coverage(sx0, top, sx1, sy1, h, w)

    def frames_for(removed_from=None):
        out = []
        for t in range(cfg.length):
            shapes = []
            for i in range(n):
                if t < delays[i] or (removed_from is not None and i == target and t >= removed_from):
                    continue
                cx, cy = centre(i, t)
                cov = _shape_coverage(squares[i], cx, cy, d, h, w)
                shapes.append((i, cov, colors[i], 1.0 + i, (cx, cy)))
            shapes.append((n, screen_cov(t), SCREEN_COLOR, 0.0, ((w - 1) / 2, (sy0 + sy1) / 2)))
            out.append(shapes)
        return out

    kinds = [OBJECT] * n + [OCCLUDER]
    control = render_episode(background, frames_for(), kinds)
    vis = control.visibility[:, target]
    present = control.existence[:, target].astype(bool)
    hidden = np.nonzero(present & (vis == 0))[0]
    if hidden.size == 0:
        raise ConfigError("object is never fully hidden; increase occlusion or size")
    reappear_start = int(hidden[-1]) + 1
    full = np.nonzero((np.arange(cfg.length) > hidden[-1]) & (vis >= 1.0))[0]
    reappear_end = int(full[0]) if full.size else min(reappear_start + int(np.ceil(d / speed)), cfg.length - 1)
    windows = [reappear_start, reappear_end, fall, min(fall + FALL_FRAMES - 1, cfg.length - 1)]
    if not surprise:
        control.windows = np.asarray(windows, np.uint32)
        control.scenario = SCENARIO_CODES["vanish-control"]
        return control
    removal = int(hidden[len(hidden) // 2])
    return render_episode(background, frames_for(removal), kinds, SCENARIO_CODES["vanish-surprise"], windows)


def occlusion_ratio(ep: Episode) -> np.ndarray:
    """Per moving object: fully hidden frames / frames present on the canvas."""
    out = []
    for k in np.nonzero(ep.kinds == OBJECT)[0]:
        present = ep.existence[:, k].astype(bool)
        if not present.any():
            continue
        out.append(np.count_nonzero(present & (ep.visibility[:, k] == 0)) / np.count_nonzero(present))
    return np.asarray(out)
