"""Slot-wise encoder and decoder, gated recurrent cell and the transition module."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from loci import autodiff as ad
from loci import scene
from loci.autodiff import Tensor
from loci.errors import ContractError, ShapeError
from loci.nn.layers import Conv2d, ConvTranspose2d, LayerNorm, Linear, MultiHeadAttention
from loci.nn.params import ParamStore

ENCODER_CHANNELS = 12
POSITION_DIM = 4


@dataclass(frozen=True)
class Arch:
    height: int = 32
    width: int = 32
    num_slots: int = 3
    gestalt_dim: int = 48
    hidden_dim: int = 64
    trunk_channels: tuple = (32, 48, 48, 48)
    trunk_strides: tuple = (2, 2, 1, 1)
    position_hidden: int = 64
    transition_dim: int = 80
    heads: int = 10
    bg_offset: float = 0.1
    occlusion_threshold: float = 0.8
    mask_bias: float = -2.0
    sigma_init: float = 0.2

    @property
    def latent_size(self) -> tuple:
        down = int(np.prod(self.trunk_strides))
        return self.height // down, self.width // down

    def validate(self):
        down = int(np.prod(self.trunk_strides))
        if self.height % 4 or self.width % 4 or self.height % down or self.width % down:
            raise ContractError(f"resolution {self.height}x{self.width} must be divisible by 4 and {down}")
        if self.num_slots < 1:
            raise ContractError("need at least one slot")
        if self.transition_dim % self.heads:
            raise ContractError(f"transition width {self.transition_dim} not divisible by {self.heads} heads")


def sigma_from_preact(s: Tensor, width: int) -> Tensor:
    """Positive spread: exp of a bounded pre-activation, clamped to [1/width, 2]."""
    return ad.minimum(ad.maximum(ad.exp(ad.tanh(s) * 3.0 - 1.5), 1.0 / width), 2.0)


def soft_argmax(logits: Tensor) -> Tensor:
    """Expected normalised (x, y) under a spatial softmax of ``(N, H, W)`` logits."""
    n, h, w = logits.shape
    probs = ad.reshape(ad.softmax(ad.reshape(logits, (n, h * w)), axis=-1), (n, h * w))
    gx, gy = scene.pixel_grid(h, w, logits.dtype)
    grid = np.stack([gx.reshape(-1), gy.reshape(-1)], axis=1)
    return ad.matmul(probs, grid)


class Encoder:
    """Shared-weight conv trunk with a Gestalt head and a position head.

    Inputs ``(B, K, 12, H, W)``; outputs Gestalt logits ``(B, K, D_g)`` and
    position codes ``(B, K, 4)`` = ``(mu_x, mu_y, sigma, z)``.
    """

    def __init__(self, store: ParamStore, arch: Arch, name: str = "encoder"):
        self.arch = arch
        self.convs = []
        c_in = ENCODER_CHANNELS
        for i, (c_out, s) in enumerate(zip(arch.trunk_channels, arch.trunk_strides)):
            self.convs.append(Conv2d(store, f"{name}.trunk.{i}", c_in, c_out, 3, stride=s))
            c_in = c_out
        h, w = arch.latent_size
        self.gestalt = Linear(store, f"{name}.gestalt", c_in, arch.gestalt_dim)
        self.saliency = Conv2d(store, f"{name}.position.saliency", c_in, 1, 1)
        self.position = Linear(store, f"{name}.position.hidden", c_in * h * w, arch.position_hidden)
        feat = arch.position_hidden + 2
        self.mu = Linear(store, f"{name}.position.mu", feat, 2)
        self.sigma = Linear(store, f"{name}.position.sigma", feat, 1)
        self.z = Linear(store, f"{name}.position.z", feat, 1)

    def trunk(self, x: Tensor) -> Tensor:
        for conv in self.convs:
            x = ad.relu(conv(x))
        return x

    def __call__(self, inputs) -> tuple[Tensor, Tensor]:
        inputs = ad.as_tensor(inputs)
        if inputs.ndim != 5 or inputs.shape[2] != ENCODER_CHANNELS:
            raise ShapeError(f"encoder expects (B, K, {ENCODER_CHANNELS}, H, W) inputs, got {inputs.shape}")
        b, k, c, h, w = inputs.shape
        feats = self.trunk(ad.reshape(inputs, (b * k, c, h, w)))
        n, cf, hl, wl = feats.shape
        gestalt = self.gestalt(ad.mean(feats, axis=(2, 3)))
        coords = soft_argmax(ad.reshape(self.saliency(feats), (n, hl, wl)))
        hidden = ad.relu(self.position(ad.reshape(feats, (n, cf * hl * wl))))
        pfeat = ad.concat([hidden, coords], axis=1)
        mu = ad.tanh(self.mu(pfeat))
        sigma = sigma_from_preact(self.sigma(pfeat), self.arch.width)
        z = self.z(pfeat)
        position = ad.concat([mu, sigma, z], axis=1)
        return ad.reshape(gestalt, (b, k, -1)), ad.reshape(position, (b, k, POSITION_DIM))


class Decoder:
    """Priority attention at the latent grid followed by a transposed-conv stack.

    Takes binarised Gestalt codes ``(B, K, D_g)`` and positions ``(B, K, 4)``;
    returns slot images ``(B, K, 3, H, W)`` in [0, 1] and mask logits ``(B, K, H, W)``.
    """

    def __init__(self, store: ParamStore, arch: Arch, name: str = "decoder"):
        self.arch = arch
        k = arch.num_slots
        self.theta_w = store.full(f"{name}.priority.scale", (k,), 25.0)
        self.theta_b = scene.priority_bias(k)
        self.conv = Conv2d(store, f"{name}.conv", arch.gestalt_dim, 48, 3)
        self.up1 = ConvTranspose2d(store, f"{name}.up.0", 48, 32)
        self.up2 = ConvTranspose2d(store, f"{name}.up.1", 32, 4, bias=np.array([0, 0, 0, arch.mask_bias]))

    def __call__(self, gestalt, position, active=None, rng=None, slot_ids=None) -> tuple[Tensor, Tensor]:
        gestalt, position = ad.as_tensor(gestalt), ad.as_tensor(position)
        b, k, d = gestalt.shape
        hl, wl = self.arch.latent_size
        q = scene.render_gaussian(position, hl, wl)
        ids = np.arange(k) if slot_ids is None else np.asarray(slot_ids)
        theta_w = self.theta_w[ids] if slot_ids is not None else self.theta_w
        combine = scene.priority_attention(gestalt, q, position[..., 3], theta_w, self.theta_b[ids], rng=rng,
                                           active=active)
        x = ad.reshape(combine, (b * k, d, hl, wl))
        x = ad.relu(self.conv(x))
        x = ad.relu(self.up1(x))
        x = self.up2(x)
        h, w = x.shape[-2:]
        x = ad.reshape(x, (b, k, 4, h, w))
        rgb = ad.sigmoid(x[:, :, :3])
        logits = x[:, :, 3]
        return rgb, logits


class GatedCell:
    """Sparse-update recurrent cell.

    ``g = rectified_tanh(W_g [x, h] + b_g)``, ``c = tanh(W_c [x, h] + b_c)``,
    ``h' = (1 - g) h + g c`` and ``y = W_o [x, h'] + b_o``.
    """

    def __init__(self, store: ParamStore, name: str, n_in: int, n_hidden: int, n_out: int):
        self.n_hidden = n_hidden
        self.gate = Linear(store, f"{name}.gate", n_in + n_hidden, n_hidden)
        self.candidate = Linear(store, f"{name}.candidate", n_in + n_hidden, n_hidden)
        self.output = Linear(store, f"{name}.output", n_in + n_hidden, n_out)

    def __call__(self, x, h) -> tuple[Tensor, Tensor, Tensor]:
        """Returns ``(y, h_new, gate_preacts)``."""
        xh = ad.concat([x, h], axis=-1)
        pre = self.gate(xh)
        g = ad.rectified_tanh(pre)
        c = ad.tanh(self.candidate(xh))
        h_new = (1.0 - g) * h + g * c
        y = self.output(ad.concat([x, h_new], axis=-1))
        return y, h_new, pre


class Transition:
    """Attention across slots interleaved with per-slot gated recurrence.

    Residual zero-initialised heads make the untrained module the identity on (G, P).
    Hidden state has shape ``(B, K, 2, D_h)``, one row per recurrent layer.
    """

    def __init__(self, store: ParamStore, arch: Arch, name: str = "transition"):
        self.arch = arch
        dim = arch.transition_dim
        n_in = arch.gestalt_dim + POSITION_DIM + 2
        self.embed = Linear(store, f"{name}.embed", n_in, dim)
        self.norms = [LayerNorm(store, f"{name}.norm.{i}", dim) for i in range(4)]
        self.attn = [MultiHeadAttention(store, f"{name}.attention.{i}", dim, arch.heads) for i in range(2)]
        self.cells = [GatedCell(store, f"{name}.cell.{i}", dim, arch.hidden_dim, dim) for i in range(2)]
        self.delta_g = Linear(store, f"{name}.delta_gestalt", dim, arch.gestalt_dim, zero=True)
        self.delta_p = Linear(store, f"{name}.delta_position", dim, POSITION_DIM, zero=True)

    def initial_hidden(self, batch: int, slots: int) -> Tensor:
        return ad.tensor(np.zeros((batch, slots, 2, self.arch.hidden_dim)))

    def __call__(self, gestalt, position, alpha_g, alpha_p, hidden, active=None):
        """Returns ``(G_next, P_next, H_next, gate_preacts)``; inactive slots are hidden from attention."""
        gestalt, position, hidden = ad.as_tensor(gestalt), ad.as_tensor(position), ad.as_tensor(hidden)
        b, k, _ = gestalt.shape
        if k == 0:
            raise ContractError("transition needs at least one slot")
        ag = ad.reshape(ad.as_tensor(alpha_g), (b, k, 1))
        ap = ad.reshape(ad.as_tensor(alpha_p), (b, k, 1))
        x = self.embed(ad.concat([gestalt, position, ag, ap], axis=-1))
        hs, pres = [], []
        for i in range(2):
            x = x + self.attn[i](self.norms[2 * i](x), key_mask=active)
            y, h_new, pre = self.cells[i](self.norms[2 * i + 1](x), hidden[:, :, i])
            x = x + y
            hs.append(h_new)
            pres.append(pre)
        new_hidden = ad.stack(hs, axis=2)
        return gestalt + self.delta_g(x), position + self.delta_p(x), new_hidden, ad.stack(pres, axis=2)
