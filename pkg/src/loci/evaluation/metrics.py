"""Image, segmentation and per-slot error metrics."""
from __future__ import annotations

import numpy as np

from loci.errors import ShapeError

PSNR_CAP = 99.0


def _same_shape(a, b, what):
    if a.shape != b.shape:
        raise ShapeError(f"{what}: shapes {a.shape} and {b.shape} do not conform")


def slot_error(target, prediction, mask) -> float:
    """Visibility-masked squared prediction error of one slot; NaN when the mask is empty.

    ``target``/``prediction`` (C, H, W), ``mask`` (H, W).  The residual is
    averaged over channels; masks with values above 1 are rescaled to [0, 1].
    """
    target = np.asarray(target, np.float64)
    prediction = np.asarray(prediction, np.float64)
    _same_shape(target, prediction, "slot_error")
    m = np.asarray(mask, np.float64)
    if m.shape != target.shape[-2:]:
        raise ShapeError(f"slot_error: mask {m.shape} does not match image {target.shape}")
    top = m.max(initial=0.0)
    if top > 1.0:
        m = m / top
    mass = m.sum()
    if mass <= 0:
        return float("nan")
    resid = ((target - prediction) * m) ** 2
    return float(resid.mean(axis=0).sum() / mass)


def psnr(prediction, target) -> float:
    prediction, target = np.asarray(prediction, np.float64), np.asarray(target, np.float64)
    _same_shape(prediction, target, "psnr")
    mse = float(np.mean((prediction - target) ** 2))
    if mse < 1e-10:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * np.log10(1.0 / mse))


def _gauss_window(size: int, sigma: float) -> np.ndarray:
    ax = np.arange(size) - size // 2
    g = np.exp(-(ax ** 2) / (2 * sigma * sigma))
    return g / g.sum()


def _filter_valid(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    # separable valid-mode filtering along the last two axes
    n = len(g)
    rows = np.lib.stride_tricks.sliding_window_view(img, n, axis=-2) @ g
    return np.lib.stride_tricks.sliding_window_view(rows, n, axis=-1) @ g


def ssim(prediction, target, size: int = 11, sigma: float = 1.5) -> float:
    """Mean SSIM over channels and valid window positions of (C, H, W) or (H, W) images in [0, 1]."""
    x, y = np.asarray(prediction, np.float64), np.asarray(target, np.float64)
    _same_shape(x, y, "ssim")
    if x.shape[-1] < size or x.shape[-2] < size:
        raise ShapeError(f"ssim: image {x.shape} smaller than the {size}x{size} window")
    g = _gauss_window(size, sigma)
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    mx, my = _filter_valid(x, g), _filter_valid(y, g)
    vx = _filter_valid(x * x, g) - mx * mx
    vy = _filter_valid(y * y, g) - my * my
    cov = _filter_valid(x * y, g) - mx * my
    s = ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
    return float(s.mean())


def ari(labels_a, labels_b) -> float:
    """Adjusted Rand index between two labelings of the same pixels."""
    a, b = np.ravel(labels_a), np.ravel(labels_b)
    _same_shape(a, b, "ari")
    _, ia = np.unique(a, return_inverse=True)
    _, ib = np.unique(b, return_inverse=True)
    table = np.zeros((ia.max() + 1, ib.max() + 1), np.int64)
    np.add.at(table, (ia, ib), 1)

    def pairs(x):
        x = np.asarray(x, np.float64)
        return float((x * (x - 1) / 2).sum())

    both = pairs(table)
    same_a, same_b = pairs(table.sum(axis=1)), pairs(table.sum(axis=0))
    total = a.size * (a.size - 1) / 2
    expected = same_a * same_b / total if total else 0.0
    top = (same_a + same_b) / 2
    if top == expected:
        return 1.0
    return (both - expected) / (top - expected)


def segmentation_labels(visibility: np.ndarray, background: np.ndarray) -> np.ndarray:
    """Per-pixel argmax over slot visibility masks (labels 1..K) and the background (label 0)."""
    stack = np.concatenate([np.asarray(background)[None], np.asarray(visibility)], axis=0)
    return np.argmax(stack, axis=0)


def position_from_mask(mask, threshold: float = 0.8):
    """Centre ``(x, y)`` of the tight bounding box over supra-threshold pixels, or None when empty."""
    m = np.asarray(mask) > threshold
    if not m.any():
        return None
    rows = np.nonzero(m.any(axis=1))[0]
    cols = np.nonzero(m.any(axis=0))[0]
    return (cols[0] + cols[-1]) / 2.0, (rows[0] + rows[-1]) / 2.0
