"""Elementwise ops with hand-specified (pseudo-)derivatives."""
from __future__ import annotations

from typing import Callable

import numpy as np

from loci.autodiff.engine import Tensor, _make, as_tensor
from loci.errors import RegistrationError

_REGISTRY: dict[str, "CustomOp"] = {}


class CustomOp:
    """A registered scalar function applied elementwise.

    ``pseudo_backward(x, y)`` receives the input and the forward output and
    returns the local derivative used in the backward pass.
    """

    def __init__(self, name: str, forward: Callable, pseudo_backward: Callable):
        self.name = name
        self.forward = forward
        self.pseudo_backward = pseudo_backward

    def __call__(self, a) -> Tensor:
        a = as_tensor(a)
        x = a.data
        y = np.asarray(self.forward(x), dtype=x.dtype)
        return _make(y, (a,), lambda g: (g * self.pseudo_backward(x, y),), self.name)

    def __repr__(self):
        return f"CustomOp({self.name!r})"


def custom_grad(name: str, forward: Callable, pseudo_backward: Callable) -> CustomOp:
    if name in _REGISTRY:
        raise RegistrationError(f"custom op {name!r} is already registered")
    op = CustomOp(name, forward, pseudo_backward)
    _REGISTRY[name] = op
    return op


def registered_ops() -> dict[str, CustomOp]:
    return dict(_REGISTRY)


def get_op(name: str) -> CustomOp:
    return _REGISTRY[name]


# Rectified tanh: max(0, tanh x); derivative 1 - y^2 on the open branch, 0 otherwise.
rectified_tanh = custom_grad(
    "rectified_tanh",
    lambda x: np.maximum(0.0, np.tanh(x)),
    lambda x, y: np.where(x > 0, 1.0 - y * y, 0.0).astype(x.dtype),
)

# Heaviside step with a straight-through derivative of 1.
heaviside = custom_grad(
    "heaviside",
    lambda x: (x > 0).astype(x.dtype),
    lambda x, y: np.ones_like(x),
)
