"""In-memory episodes and datasets with ground truth."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from loci.datagen.render import Layer, composite, silhouette, visibility_fraction

SCENARIOS = ("bounce-collision", "bounce-noncollision", "vanish-control", "vanish-surprise")
SCENARIO_CODES = {name: i for i, name in enumerate(SCENARIOS)}


@dataclass
class Episode:
    frames: np.ndarray  # (T, 3, H, W) float32
    positions: np.ndarray  # (T, K, 2) pixel (x, y), NaN when absent
    existence: np.ndarray  # (T, K) uint8
    masks: np.ndarray  # (T, H, W) uint8 instance ids, 0 = background
    background: np.ndarray  # (3, H, W)
    visibility: np.ndarray  # (T, K) visible fraction of the silhouette
    kinds: np.ndarray  # (K,) uint8: 1 object, 2 occluder
    windows: np.ndarray = field(default_factory=lambda: np.zeros(4, np.uint32))  # reappear/fall frame intervals
    scenario: int = 0


def render_episode(background, shapes_per_frame, kinds, scenario=0, windows=None) -> Episode:
    """``shapes_per_frame[t]`` is a list of ``(slot, coverage, color, depth, centre)`` for existing shapes."""
    t_len = len(shapes_per_frame)
    k = len(kinds)
    h, w = background.shape[1:]
    frames = np.zeros((t_len, 3, h, w), np.float32)
    masks = np.zeros((t_len, h, w), np.uint8)
    positions = np.full((t_len, k, 2), np.nan, np.float32)
    existence = np.zeros((t_len, k), np.uint8)
    visibility = np.zeros((t_len, k), np.float32)
    for t, shapes in enumerate(shapes_per_frame):
        layers = [Layer(slot + 1, cov, color, depth) for slot, cov, color, depth, _ in shapes]
        image, ids, _ = composite(background, layers)
        frames[t] = image
        masks[t] = ids
        for slot, cov, _, _, centre in shapes:
            if not np.any(silhouette(cov)):
                continue
            existence[t, slot] = 1
            positions[t, slot] = centre
            visibility[t, slot] = visibility_fraction(ids, slot + 1, cov)
    return Episode(frames, positions, existence, masks, background.astype(np.float32), visibility,
                   np.asarray(kinds, np.uint8), np.zeros(4, np.uint32) if windows is None else np.asarray(windows, np.uint32),
                   scenario)


@dataclass
class Dataset:
    frames: np.ndarray  # (N, T, 3, H, W)
    positions: np.ndarray  # (N, T, K, 2)
    existence: np.ndarray  # (N, T, K)
    masks: np.ndarray  # (N, T, H, W)
    backgrounds: np.ndarray  # (N, 3, H, W)
    visibility: np.ndarray  # (N, T, K)
    kinds: np.ndarray  # (N, K)
    windows: np.ndarray  # (N, 4)
    scenarios: np.ndarray  # (N,)

    @property
    def shape(self):
        n, t, c, h, w = self.frames.shape
        return n, t, h, w, c, self.positions.shape[2]

    def __len__(self):
        return self.frames.shape[0]

    def episode(self, i: int) -> Episode:
        return Episode(self.frames[i], self.positions[i], self.existence[i], self.masks[i], self.backgrounds[i],
                       self.visibility[i], self.kinds[i], self.windows[i], int(self.scenarios[i]))

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(*(getattr(self, f)[idx] for f in ("frames", "positions", "existence", "masks", "backgrounds",
                                                          "visibility", "kinds", "windows", "scenarios")))

    @staticmethod
    def stack(episodes: list[Episode]) -> "Dataset":
        k = max(len(e.kinds) for e in episodes)

        def pad(arr, axis, fill):
            if arr.shape[axis] == k:
                return arr
            widths = [(0, 0)] * arr.ndim
            widths[axis] = (0, k - arr.shape[axis])
            return np.pad(arr, widths, constant_values=fill)

        return Dataset(
            np.stack([e.frames for e in episodes]),
            np.stack([pad(e.positions, 1, np.nan) for e in episodes]),
            np.stack([pad(e.existence, 1, 0) for e in episodes]),
            np.stack([e.masks for e in episodes]),
            np.stack([e.background for e in episodes]),
            np.stack([pad(e.visibility, 1, 0) for e in episodes]),
            np.stack([pad(e.kinds, 0, 0) for e in episodes]),
            np.stack([e.windows for e in episodes]).astype(np.uint32),
            np.array([e.scenario for e in episodes], np.uint8),
        )

    @staticmethod
    def concat(parts: list["Dataset"]) -> "Dataset":
        return Dataset.stack([p.episode(i) for p in parts for i in range(len(p))])
