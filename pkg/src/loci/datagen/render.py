"""Anti-aliased shape rasterisation and depth-ordered compositing with exact ground truth.

Pixel ``(row i, column j)`` covers the unit square centred on ``(x=j, y=i)``;
coverage is estimated on a fixed ``SUPERSAMPLE x SUPERSAMPLE`` sub-grid.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SUPERSAMPLE = 4
NONE, OBJECT, OCCLUDER = 0, 1, 2


def _subgrid(height: int, width: int):
    offs = (np.arange(SUPERSAMPLE) + 0.5) / SUPERSAMPLE - 0.5
    ys = (np.arange(height)[:, None] + offs[None, :]).reshape(-1)
    xs = (np.arange(width)[:, None] + offs[None, :]).reshape(-1)
    return ys, xs


def _pool(inside: np.ndarray, height: int, width: int) -> np.ndarray:
    s = SUPERSAMPLE
    return inside.reshape(height, s, width, s).mean(axis=(1, 3))


def disc_coverage(cx: float, cy: float, radius: float, height: int, width: int) -> np.ndarray:
    ys, xs = _subgrid(height, width)
    inside = (xs[None, :] - cx) ** 2 + (ys[:, None] - cy) ** 2 <= radius * radius
    return _pool(inside, height, width)


def rect_coverage(x0: float, y0: float, x1: float, y1: float, height: int, width: int) -> np.ndarray:
    """Coverage of the axis-aligned box ``[x0, x1] x [y0, y1]`` in pixel-centre coordinates."""
    ys, xs = _subgrid(height, width)
    inside = ((xs[None, :] >= x0) & (xs[None, :] <= x1)) & ((ys[:, None] >= y0) & (ys[:, None] <= y1))
    return _pool(inside, height, width)


@dataclass
class Layer:
    """One shape in a frame: ``ident`` >= 1 is its instance id, ``depth`` smaller is nearer."""

    ident: int
    coverage: np.ndarray
    color: np.ndarray
    depth: float


def composite(background: np.ndarray, layers: list[Layer]):
    """Alpha-composite ``layers`` front to back over ``background`` (3, H, W).

    Returns ``(image, ids, occupancy)`` where ``occupancy`` maps each id (0 for
    background) to its visible weight per pixel and ``ids`` is the per-pixel
    argmax of that occupancy (ties resolve to the lowest id).
    """
    h, w = background.shape[1:]
    order = sorted(layers, key=lambda l: (l.depth, l.ident))
    remaining = np.ones((h, w))
    image = np.zeros((3, h, w))
    occupancy = {}
    for layer in order:
        vis = layer.coverage * remaining
        occupancy[layer.ident] = vis
        image += vis[None] * np.asarray(layer.color, float)[:, None, None]
        remaining = remaining * (1.0 - layer.coverage)
    occupancy[0] = remaining
    image += remaining[None] * background
    keys = sorted(occupancy)
    stack = np.stack([occupancy[k] for k in keys])
    ids = np.asarray(keys)[np.argmax(stack, axis=0)]
    return image, ids.astype(np.uint8), occupancy


def silhouette(coverage: np.ndarray) -> np.ndarray:
    """Pixels the shape would own if rendered alone over the background."""
    return coverage > 0.5


def visibility_fraction(ids: np.ndarray, ident: int, coverage: np.ndarray) -> float:
    total = int(np.count_nonzero(silhouette(coverage)))
    if total == 0:
        return 0.0
    return float(np.count_nonzero(ids == ident)) / total


PALETTE = np.array([
    [0.95, 0.15, 0.15],
    [0.15, 0.9, 0.2],
    [0.2, 0.35, 0.95],
    [0.95, 0.9, 0.15],
    [0.9, 0.2, 0.9],
    [0.15, 0.9, 0.9],
])

PURE_PALETTE = np.array([
    [1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0],
    [0.0, 0.0, 1.0],
    [1.0, 1.0, 0.0],
    [1.0, 0.0, 1.0],
    [0.0, 1.0, 1.0],
])


def dark_background(rng: np.random.Generator, height: int, width: int) -> np.ndarray:
    """A static, dark, gently shaded background."""
    base = rng.uniform(0.02, 0.12, size=3)
    ramp = np.linspace(-0.02, 0.02, height)[:, None] * np.ones((1, width))
    return np.clip(base[:, None, None] + ramp[None], 0.0, 1.0)
