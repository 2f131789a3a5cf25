"""Training objectives and their weighted combination."""
from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from loci import autodiff as ad
from loci.autodiff import Tensor
from loci.errors import NumericError

BCE_EPS = 1e-6
FOREGROUND_THRESHOLD = 0.01


@dataclass(frozen=True)
class LossWeights:
    prediction: float = 1.0
    reconstruction: float = 0.33
    gestalt_change: float = 0.1
    position_change: float = 0.01
    gate_l0: float = 5e-6
    gatel0rd: float = 1e-10


TERMS = ("prediction_bce", "reconstruction_bce", "gestalt_change", "position_change", "gate_l0", "gatel0rd_reg")
_WEIGHT_OF = dict(zip(TERMS, (f.name for f in fields(LossWeights))))


@dataclass
class LossReport:
    prediction_bce: float = 0.0
    reconstruction_bce: float = 0.0
    gestalt_change: float = 0.0
    position_change: float = 0.0
    gate_l0: float = 0.0
    gatel0rd_reg: float = 0.0
    total: float = 0.0
    total_tensor: Tensor | None = field(default=None, repr=False)

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in TERMS + ("total",)}

    def __add__(self, other: "LossReport") -> "LossReport":
        out = LossReport(**{k: getattr(self, k) + getattr(other, k) for k in TERMS + ("total",)})
        a, b = self.total_tensor, other.total_tensor
        out.total_tensor = b if a is None else (a if b is None else a + b)
        return out


def bce(pred, target) -> Tensor:
    """Mean pixelwise binary cross-entropy with the prediction clamped into (0, 1)."""
    pred = ad.clip(ad.as_tensor(pred), BCE_EPS, 1.0 - BCE_EPS)
    target = np.clip(target.data if isinstance(target, Tensor) else np.asarray(target), 0.0, 1.0)
    return -ad.mean(ad.log(pred) * target + ad.log(1.0 - pred) * (1.0 - target))


def foreground_mask(image: np.ndarray, background: np.ndarray, threshold: float = FOREGROUND_THRESHOLD) -> np.ndarray:
    """``(B, 1, H, W)`` indicator of pixels whose mean squared distance to the background exceeds ``threshold``."""
    diff = np.mean((np.asarray(image) - np.asarray(background)) ** 2, axis=-3, keepdims=True)
    return (diff > threshold).astype(np.asarray(image).dtype)


def background_blend(image, mask_fg: np.ndarray, beta: float):
    """``I * M_fg + I * (1 - M_fg) * beta`` for arrays or tensors."""
    weight = mask_fg + (1.0 - mask_fg) * beta
    if isinstance(image, Tensor):
        return image * weight.astype(image.dtype)
    return np.asarray(image) * weight


def _slot_weights(slot_mask, shape, dtype):
    if slot_mask is None:
        return None
    m = np.asarray(slot_mask, dtype=dtype)
    return m.reshape(m.shape + (1,) * (len(shape) - m.ndim))


def position_change(position, position_next, slot_mask=None) -> Tensor:
    """Squared position change summed over code entries and slots, averaged over the batch."""
    d = ad.as_tensor(position) - ad.as_tensor(position_next)
    sq = d * d
    m = _slot_weights(slot_mask, d.shape, d.dtype)
    if m is not None:
        sq = sq * m
    return ad.sum(sq) * (1.0 / d.shape[0])


def gestalt_change(decoded, decoded_next, slot_mask=None) -> Tensor:
    """Squared difference of two centre decodes ``(B, K, C, H, W)``: pixel mean, slot sum, batch mean."""
    d = ad.as_tensor(decoded) - ad.as_tensor(decoded_next)
    per_slot = ad.mean(d * d, axis=(2, 3, 4))
    if slot_mask is not None:
        per_slot = per_slot * np.asarray(slot_mask, dtype=d.dtype)
    return ad.sum(per_slot) * (1.0 / d.shape[0])


def l0_count(preacts, slot_mask=None) -> Tensor:
    """``sum(step(rectified_tanh(preacts)))`` averaged over the batch axis.

    ``preacts`` has the batch and slot axes first; ``slot_mask`` (B, K) drops slots.
    """
    preacts = ad.as_tensor(preacts)
    opened = ad.heaviside(ad.rectified_tanh(preacts))
    m = _slot_weights(slot_mask, preacts.shape, preacts.dtype)
    if m is not None:
        opened = opened * m
    return ad.sum(opened) * (1.0 / preacts.shape[0])


def combine(terms: dict, weights: LossWeights) -> LossReport:
    """Weighted sum of unweighted term tensors; terms with zero weight are skipped entirely."""
    report = LossReport()
    total = None
    for name in TERMS:
        term = terms.get(name)
        if term is None:
            continue
        w = getattr(weights, _WEIGHT_OF[name])
        if w == 0.0:
            continue
        value = float(np.asarray(term.data).reshape(()))
        if not np.isfinite(value):
            raise NumericError(f"loss term {name} is not finite")
        scaled = term * w
        setattr(report, name, value)
        total = scaled if total is None else total + scaled
    if total is not None:
        report.total = float(total.data)
        report.total_tensor = total
    return report


def weighted_total(report: LossReport, weights: LossWeights) -> float:
    """Recompute ``sum_i w_i * term_i`` from the unweighted fields."""
    return float(sum(getattr(weights, _WEIGHT_OF[n]) * getattr(report, n) for n in TERMS))
