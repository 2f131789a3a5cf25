"""Closed-form scene algebra shared by the encoder/decoder loop.

Layout conventions: images are ``(..., 3, H, W)``, per-slot maps are
``(..., K, H, W)`` and position codes are ``(..., K, 4)`` holding
``(mu_x, mu_y, sigma, z)`` in normalised image coordinates, where pixel column
``j`` sits at ``-1 + 2 j / (W - 1)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from loci import autodiff as ad
from loci.autodiff import Tensor
from loci.errors import ContractError, NumericError, ShapeError

EXCLUDED_LOGIT = -1.0e4


def _data(x):
    return x.data if isinstance(x, Tensor) else np.asarray(x)


def pixel_grid(height: int, width: int, dtype=None):
    """Normalised pixel-centre coordinates ``(xs, ys)``, each of shape (H, W)."""
    dtype = dtype or ad.default_dtype()
    xs = np.linspace(-1.0, 1.0, width, dtype=np.float64)
    ys = np.linspace(-1.0, 1.0, height, dtype=np.float64)
    gx, gy = np.meshgrid(xs, ys)
    return gx.astype(dtype), gy.astype(dtype)


def to_pixels(mu: np.ndarray, height: int, width: int) -> np.ndarray:
    """Map normalised ``(x, y)`` coordinates to pixel units (column, row)."""
    mu = np.asarray(mu, dtype=np.float64)
    scale = np.array([(width - 1) / 2.0, (height - 1) / 2.0])
    return (mu + 1.0) * scale


def to_normalized(pix: np.ndarray, height: int, width: int) -> np.ndarray:
    pix = np.asarray(pix, dtype=np.float64)
    scale = np.array([(width - 1) / 2.0, (height - 1) / 2.0])
    return pix / scale - 1.0


def error_map(image, background, prediction) -> np.ndarray:
    """Background-gated prediction error, shape ``(..., 1, H, W)``.

    ``sqrt(mean_rgb((I - R_bg)^2)) * mean_rgb((I - R_hat)^2) ** 0.25``.
    Computed on plain arrays: the map is fed back to the encoder without gradient.
    """
    i, b, r = _data(image), _data(background), _data(prediction)
    if i.shape != b.shape or i.shape != r.shape:
        raise ShapeError(f"error_map: shapes {i.shape}, {b.shape} and {r.shape} do not conform")
    if i.ndim < 3 or i.shape[-3] != 3:
        raise ShapeError(f"error_map: expected (..., 3, H, W) images, got {i.shape}")
    to_bg = np.mean((i - b) ** 2, axis=-3, keepdims=True, dtype=np.float64)
    to_pred = np.mean((i - r) ** 2, axis=-3, keepdims=True, dtype=np.float64)
    return (np.sqrt(to_bg) * np.sqrt(np.sqrt(to_pred))).astype(i.dtype)


def render_gaussian(position, height: int, width: int) -> Tensor:
    """Isotropic Gaussian maps ``(..., H, W)`` for position codes ``(..., >=3)``.

    The spread is clamped below at ``1 / width``.
    """
    position = ad.as_tensor(position)
    if height < 2 or width < 2:
        raise ContractError("render_gaussian needs H, W >= 2")
    gx, gy = pixel_grid(height, width, position.dtype)
    mx = ad.reshape(position[..., 0], position.shape[:-1] + (1, 1))
    my = ad.reshape(position[..., 1], position.shape[:-1] + (1, 1))
    sigma = ad.maximum(ad.reshape(position[..., 2], position.shape[:-1] + (1, 1)), 1.0 / width)
    d2 = (mx - gx) ** 2 + (my - gy) ** 2
    return ad.exp(-d2 / (sigma * sigma * 2.0))


def render_gaussian_np(position: np.ndarray, height: int, width: int) -> np.ndarray:
    with ad.no_grad():
        return render_gaussian(ad.as_tensor(position), height, width).data


def priority_bias(num_slots: int) -> np.ndarray:
    return np.arange(num_slots, dtype=ad.default_dtype())


def priority_attention(gestalt, gaussians, priority, theta_w, theta_b, rng=None, noise_std: float = 0.1,
                       active=None) -> Tensor:
    """Priority-ordered occlusion of slot Gaussians, expanded by the Gestalt codes.

    gestalt ``(B, K, D)``, gaussians ``(B, K, H, W)``, priority ``(B, K)``,
    ``theta_w`` / ``theta_b`` ``(K,)``.  Noise is added to the scaled priorities
    only when ``rng`` is given.  ``active`` (B, K) bool removes inactive slots
    from the subtraction.  Returns ``(B, K, D, H, W)``.
    """
    gestalt, gaussians, priority = ad.as_tensor(gestalt), ad.as_tensor(gaussians), ad.as_tensor(priority)
    b, k = priority.shape
    if k < 1:
        raise ContractError("priority_attention needs at least one slot")
    h, w = gaussians.shape[-2:]
    z = priority * float(k)
    if rng is not None:
        z = ad.add_noise(z, rng, noise_std)
    z = (z + theta_b) * theta_w
    diff = ad.reshape(z, (b, k, 1)) - ad.reshape(z, (b, 1, k))
    off_diag = 1.0 - np.eye(k, dtype=gaussians.dtype)
    weights = ad.sigmoid(diff) * off_diag
    q_flat = ad.reshape(gaussians, (b, k, h * w))
    others = q_flat
    if active is not None:
        others = q_flat * np.asarray(active, dtype=gaussians.dtype)[:, :, None]
    suppressed = ad.relu(q_flat - ad.matmul(weights, others))
    suppressed = ad.reshape(suppressed, (b, k, 1, h, w))
    return suppressed * ad.reshape(gestalt, gestalt.shape + (1, 1))


@dataclass
class Masks:
    """Post-processed decoder masks (slot axis ``K`` before the spatial axes)."""

    visibility: Tensor  # (B, K, H, W)
    object: Tensor  # (B, K, H, W)
    complement: Tensor  # (B, K, H, W)
    background: Tensor  # (B, H, W)
    logits: Tensor  # (B, K, H, W)
    bg_offset: float

    def with_background(self) -> Tensor:
        """Visibility masks with the background appended as slot ``K``."""
        bg = self.background
        return ad.concat([self.visibility, ad.reshape(bg, bg.shape[:-2] + (1,) + bg.shape[-2:])], axis=-3)


def postprocess_masks(logits, bg_offset: float, active=None) -> Masks:
    """Softmax the slot logits against a uniform background logit.

    Slots where ``active`` is False are removed from the competition.
    """
    logits = ad.as_tensor(logits)
    if not np.all(np.isfinite(logits.data)):
        raise NumericError("postprocess_masks: non-finite mask logits")
    if active is not None:
        keep = np.broadcast_to(np.asarray(active, dtype=bool)[..., None, None], logits.shape)
        logits = ad.where(keep, logits, EXCLUDED_LOGIT)
    k = logits.shape[-3]
    bg = np.full(logits.shape[:-3] + (1,) + logits.shape[-2:], bg_offset, dtype=logits.dtype)
    stacked = ad.concat([logits, bg], axis=-3)
    soft = ad.softmax(stacked, axis=-3)
    visibility = soft[..., :k, :, :]
    background = soft[..., k, :, :]
    obj = ad.sigmoid(logits - bg_offset)
    total = ad.sum(visibility, axis=-3, keepdims=True)
    complement = total - visibility
    return Masks(visibility, obj, complement, background, logits, bg_offset)


def occlusion_state(visibility, objects, threshold: float = 0.8, c: float = 1e-4) -> np.ndarray:
    """Fraction of an object's area that is hidden, per mask (last two axes are H, W)."""
    mv, mo = _data(visibility), _data(objects)
    visible = np.count_nonzero(mv > threshold, axis=(-2, -1))
    whole = np.count_nonzero(mo > threshold, axis=(-2, -1))
    occ = 1.0 - visible / (whole + c)
    return np.clip(occ, 0.0, 1.0).astype(mv.dtype)


def compose(slot_rgb, background_rgb, masks, atol: float = 1e-3) -> Tensor:
    """Pixelwise convex combination of slot images and the background.

    ``slot_rgb`` (B, K, 3, H, W), ``background_rgb`` (B, 3, H, W) and ``masks``
    (B, K+1, H, W) with the background mask last.
    """
    slot_rgb, background_rgb, masks = ad.as_tensor(slot_rgb), ad.as_tensor(background_rgb), ad.as_tensor(masks)
    k = slot_rgb.shape[-4]
    if masks.shape[-3] != k + 1 or masks.shape[-2:] != slot_rgb.shape[-2:]:
        raise ShapeError(f"compose: masks {masks.shape} do not match slot images {slot_rgb.shape}")
    total = masks.data.sum(axis=-3, dtype=np.float64)
    if np.max(np.abs(total - 1.0)) > atol:
        raise ContractError("compose: masks are not normalised")
    bg = ad.reshape(background_rgb, background_rgb.shape[:-3] + (1,) + background_rgb.shape[-3:])
    layers = ad.concat([slot_rgb, bg], axis=-4)
    weights = ad.reshape(masks, masks.shape[:-2] + (1,) + masks.shape[-2:])
    return ad.sum(layers * weights, axis=-4)


def binarize_gestalt(code, noise_on: bool = False, rng=None) -> Tensor:
    """Sigmoid squashing plus optional saturating noise ``G(1-G) N(0,1)``, clamped to [0, 1]."""
    g = ad.sigmoid(code)
    if not noise_on:
        return g
    if rng is None:
        raise ContractError("binarize_gestalt: noise requested without a generator")
    spread = g.data * (1.0 - g.data)
    return ad.clip(ad.add_noise(g, rng, spread), 0.0, 1.0)
