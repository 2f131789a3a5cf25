"""Percept gate: controller network, blending of observed and imagined codes, L0 penalty."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from loci import autodiff as ad
from loci.autodiff import Tensor
from loci.errors import ConfigError, ContractError
from loci.nn.layers import Linear
from loci.nn.params import ParamStore

MODES = ("looped", "unlooped", "visibility")
OPEN = 1.0 - 1e-6
CONTROLLER_NOISE = 0.1


@dataclass
class GateDecision:
    alpha_g: Tensor  # (B, K)
    alpha_p: Tensor  # (B, K)
    preacts: Tensor | None = None  # (B, K, 2), noisy pre-activations when produced by the controller


def controller_input_size(gestalt_dim: int) -> int:
    return 2 * (gestalt_dim + 4 + 1) + 4


class GateController:
    """Per-slot feed-forward net 32 -> 16 -> 2 with tanh hidden activations."""

    def __init__(self, store: ParamStore, gestalt_dim: int, name: str = "gate", open_bias: float = 2.0):
        n_in = controller_input_size(gestalt_dim)
        self.l1 = Linear(store, f"{name}.hidden.0", n_in, 32)
        self.l2 = Linear(store, f"{name}.hidden.1", 32, 16)
        self.l3 = Linear(store, f"{name}.out", 16, 2, bias=open_bias)

    def __call__(self, obs, pred, prev_position, training: bool = False, rng=None) -> GateDecision:
        """``obs`` and ``pred`` are ``(G, P, O)`` triples; G are Gestalt values, O are ``(B, K)``.

        Inputs are concatenated as (P_obs, G_obs, O_obs, P_pred, G_pred, O_pred, P_prev).
        """
        g_obs, p_obs, o_obs = obs
        g_pred, p_pred, o_pred = pred
        b, k = np.shape(o_obs)
        parts = [p_obs, g_obs, np.reshape(o_obs, (b, k, 1)), p_pred, g_pred, np.reshape(o_pred, (b, k, 1)), prev_position]
        x = ad.concat([ad.as_tensor(p) for p in parts], axis=-1)
        z = self.l3(ad.tanh(self.l2(ad.tanh(self.l1(x)))))
        if training:
            if rng is None:
                raise ContractError("gate controller: training noise needs a generator")
            z = ad.add_noise(z, rng, CONTROLLER_NOISE)
        alpha = ad.rectified_tanh(z)
        return GateDecision(alpha[..., 0], alpha[..., 1], z)


def _blend(a, obs, pred):
    a = ad.as_tensor(a)
    ae = ad.reshape(a, a.shape + (1,))
    return ae * obs + (1.0 - ae) * pred


def blend(obs, pred, gates: GateDecision) -> tuple[Tensor, Tensor]:
    """Linear interpolation ``alpha * observed + (1 - alpha) * predicted`` for Gestalt and position."""
    g_obs, p_obs = (ad.as_tensor(v) for v in obs)
    g_pred, p_pred = (ad.as_tensor(v) for v in pred)
    if g_obs.shape != g_pred.shape or p_obs.shape != p_pred.shape:
        raise ContractError(f"blend: observed {g_obs.shape}/{p_obs.shape} vs predicted {g_pred.shape}/{p_pred.shape}")
    for a in (gates.alpha_g, gates.alpha_p):
        d = a.data if isinstance(a, Tensor) else np.asarray(a)
        if np.any(d < 0) or np.any(d >= 1):
            raise ContractError("gate activation outside [0, 1)")
    return _blend(gates.alpha_g, g_obs, g_pred), _blend(gates.alpha_p, p_obs, p_pred)


def gate_l0_loss(gates: GateDecision, weight: float = 5e-6) -> Tensor:
    """``weight * sum_k (step(alpha_G) + step(alpha_P))``, averaged over the batch axis."""
    opened = ad.heaviside(ad.as_tensor(gates.alpha_g)) + ad.heaviside(ad.as_tensor(gates.alpha_p))
    b = opened.shape[0] if opened.ndim > 1 else 1
    return ad.sum(opened) * (weight / b)


def check_mode(mode: str) -> str:
    if mode not in MODES:
        raise ConfigError(f"unknown gate mode {mode!r}; expected one of {', '.join(MODES)}")
    return mode


def ablation_policy(mode: str, occlusion) -> GateDecision | None:
    """Fixed gate openings for the ablations; ``None`` means use the controller."""
    check_mode(mode)
    if mode == "looped":
        return None
    occ = np.asarray(occlusion, dtype=ad.default_dtype())
    if mode == "unlooped":
        a = np.full(occ.shape, OPEN, dtype=occ.dtype)
    else:
        a = np.clip(1.0 - occ, 0.0, OPEN).astype(occ.dtype)
    return GateDecision(ad.tensor(a), ad.tensor(a.copy()))


def fixed_gates(alpha_g, alpha_p=None) -> GateDecision:
    alpha_g = np.asarray(alpha_g, dtype=ad.default_dtype())
    alpha_p = alpha_g if alpha_p is None else np.asarray(alpha_p, dtype=ad.default_dtype())
    return GateDecision(ad.tensor(alpha_g), ad.tensor(alpha_p.copy()))
