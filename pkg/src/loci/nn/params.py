"""Flat registry of named parameter tensors."""
from __future__ import annotations

from typing import Iterator

import numpy as np

from loci.autodiff import Tensor, default_dtype
from loci.errors import ContractError, RegistrationError


class ParamStore:
    """Ordered ``dotted.name -> Tensor`` mapping shared by all sub-networks."""

    def __init__(self, rng: np.random.Generator | None = None):
        self._params: dict[str, Tensor] = {}
        self.rng = rng if rng is not None else np.random.default_rng(0)

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self._params:
            raise RegistrationError(f"parameter {name!r} already registered")
        t = Tensor(np.asarray(value, dtype=default_dtype()), requires_grad=True, name=name)
        self._params[name] = t
        return t

    def glorot(self, name: str, shape: tuple, fan_in: int, fan_out: int, gain: float = 1.0) -> Tensor:
        limit = gain * np.sqrt(6.0 / (fan_in + fan_out))
        return self.add(name, self.rng.uniform(-limit, limit, size=shape))

    def zeros(self, name: str, shape: tuple) -> Tensor:
        return self.add(name, np.zeros(shape))

    def full(self, name: str, shape: tuple, value: float) -> Tensor:
        return self.add(name, np.full(shape, value))

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self):
        return len(self._params)

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def items(self):
        return self._params.items()

    def values(self):
        return self._params.values()

    def names(self, prefix: str = "") -> list[str]:
        return [n for n in self._params if n.startswith(prefix)]

    def zero_grad(self):
        for p in self._params.values():
            p.grad = None

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self._params.values()))

    def state(self) -> dict[str, np.ndarray]:
        return {n: p.data.copy() for n, p in self._params.items()}

    def load_state(self, state: dict[str, np.ndarray], strict: bool = True):
        if strict:
            missing = set(self._params) - set(state)
            extra = set(state) - set(self._params)
            if missing or extra:
                raise ContractError(f"parameter set mismatch: missing {sorted(missing)[:5]}, unexpected {sorted(extra)[:5]}")
        for name, value in state.items():
            if name not in self._params:
                continue
            p = self._params[name]
            value = np.asarray(value)
            if value.shape != p.shape:
                raise ContractError(f"parameter {name!r}: stored shape {value.shape} != model shape {p.shape}")
            p.data = value.astype(p.data.dtype, copy=True)
