"""The assembled world model: parameter registry plus its four sub-networks."""
from __future__ import annotations

import dataclasses

import numpy as np

from loci import autodiff as ad
from loci import scene
from loci.gate import GateController, check_mode
from loci.nn.networks import Arch, Decoder, Encoder, Transition
from loci.nn.params import ParamStore


class Model:
    def __init__(self, arch: Arch | None = None, mode: str = "looped", seed: int = 0):
        self.arch = arch or Arch()
        self.arch.validate()
        self.mode = check_mode(mode)
        self.seed = seed
        self.params = ParamStore(np.random.default_rng(seed))
        self.encoder = Encoder(self.params, self.arch)
        self.decoder = Decoder(self.params, self.arch)
        self.transition = Transition(self.params, self.arch)
        self.controller = GateController(self.params, self.arch.gestalt_dim)

    @property
    def num_slots(self) -> int:
        return self.arch.num_slots

    def initial_codes(self, batch: int):
        """Gestalt logits, position codes and recurrent state for fresh slots."""
        a = self.arch
        dt = ad.default_dtype()
        gestalt = np.zeros((batch, a.num_slots, a.gestalt_dim), dt)
        position = np.zeros((batch, a.num_slots, 4), dt)
        position[..., 2] = a.sigma_init
        hidden = np.zeros((batch, a.num_slots, 2, a.hidden_dim), dt)
        return gestalt, position, hidden

    def decode_centered(self, gestalt) -> ad.Tensor:
        """Decode each slot's binarised Gestalt code alone at the image centre.

        ``gestalt`` ``(B, K, D)`` -> ``(B, K, 4, H, W)``: RGB and object mask.
        """
        gestalt = ad.as_tensor(gestalt)
        b, k, d = gestalt.shape
        g = ad.reshape(ad.sigmoid(gestalt), (b * k, 1, d))
        p0 = np.zeros((b * k, 1, 4), ad.default_dtype())
        p0[..., 2] = self.arch.sigma_init
        rgb, logits = self.decoder(g, p0, slot_ids=[0])
        obj = ad.sigmoid(logits - self.arch.bg_offset)
        h, w = obj.shape[-2:]
        out = ad.concat([rgb, ad.reshape(obj, (b * k, 1, 1, h, w))], axis=2)
        return ad.reshape(out, (b, k, 4, h, w))

    def meta(self) -> dict:
        fields = dataclasses.asdict(self.arch)
        fields["trunk_channels"] = list(fields["trunk_channels"])
        fields["trunk_strides"] = list(fields["trunk_strides"])
        return {"arch": fields, "mode": self.mode}

    @staticmethod
    def arch_from_meta(meta: dict) -> Arch:
        fields = dict(meta["arch"])
        fields["trunk_channels"] = tuple(int(v) for v in fields["trunk_channels"])
        fields["trunk_strides"] = tuple(int(v) for v in fields["trunk_strides"])
        return Arch(**fields)

    def position_maps(self, position: np.ndarray) -> np.ndarray:
        return scene.render_gaussian_np(position, self.arch.height, self.arch.width)
