"""Gradient-check cases for every differentiable primitive.

Each case builds a scalar function of a few random tensors (at most 64
elements each).  Inputs for ops with kinks are pushed away from the kink so
that central differences stay on one smooth branch.
"""
from __future__ import annotations

from typing import Callable

import numpy as np

from loci.autodiff import engine as T
from loci.autodiff.conv import conv2d, conv_transpose2d
from loci.autodiff.custom import heaviside, rectified_tanh
from loci.autodiff.gradcheck import GradCheckReport, grad_check

Case = Callable[[np.random.Generator], tuple]


def _t(rng, *shape, low=None, high=None, away_from=None, margin=0.05):
    if low is None:
        x = rng.standard_normal(shape)
    else:
        x = rng.uniform(low, high, size=shape)
    if away_from is not None:
        close = np.abs(x - away_from) < margin
        x = np.where(close, away_from + np.sign(x - away_from + 1e-12) * margin * 2, x)
    return T.tensor(x, requires_grad=True)


def _weights(rng, shape):
    return T.tensor(rng.standard_normal(shape))


def _loss(y, rng):
    # Random projection so every output element gets a distinct upstream gradient.
    w = _weights(rng, y.shape)
    return T.sum(y * w)


def rng_fixed(rng):
    # a generator whose state is frozen so repeated calls draw the same projection
    seed = int(rng.integers(2**31))
    return _Frozen(seed)


class _Frozen:
    def __init__(self, seed):
        self.seed = seed

    def standard_normal(self, shape):
        return np.random.default_rng(self.seed).standard_normal(shape)


def _unary(fn, **kw):
    def case(rng):
        x = _t(rng, 4, 5, **kw)
        proj = rng_fixed(rng)
        return (lambda: _loss(fn(x), proj)), [x]
    return case


def _binary(fn, shape_a=(3, 4), shape_b=(3, 4), b_kw=None):
    def case(rng):
        a = _t(rng, *shape_a)
        b = _t(rng, *shape_b, **(b_kw or {}))
        proj = rng_fixed(rng)
        return (lambda: _loss(fn(a, b), proj)), [a, b]
    return case


def _case_sum(rng):
    x = _t(rng, 3, 4, 2)
    proj = rng_fixed(rng)
    return (lambda: _loss(T.sum(x, axis=1), proj)), [x]


def _case_mean(rng):
    x = _t(rng, 3, 4, 2)
    proj = rng_fixed(rng)
    return (lambda: _loss(T.mean(x, axis=(0, 2), keepdims=True), proj)), [x]


def _case_concat(rng):
    a, b, c = _t(rng, 2, 3), _t(rng, 2, 1), _t(rng, 2, 4)
    proj = rng_fixed(rng)
    return (lambda: _loss(T.concat([a, b, c], axis=1), proj)), [a, b, c]


def _case_slice(rng):
    x = _t(rng, 4, 6)
    proj = rng_fixed(rng)
    return (lambda: _loss(x[1:3, ::2], proj)), [x]


def _case_reshape(rng):
    x = _t(rng, 3, 4)
    proj = rng_fixed(rng)
    return (lambda: _loss(T.reshape(x, (2, 6)), proj)), [x]


def _case_transpose(rng):
    x = _t(rng, 2, 3, 4)
    proj = rng_fixed(rng)
    return (lambda: _loss(T.transpose(x, (2, 0, 1)), proj)), [x]


def _case_matmul(rng):
    a, b = _t(rng, 2, 3, 4), _t(rng, 4, 5)
    proj = rng_fixed(rng)
    return (lambda: _loss(a @ b, proj)), [a, b]


def _case_conv(stride):
    def case(rng):
        x, w, b = _t(rng, 1, 2, 5, 5), _t(rng, 3, 2, 3, 3), _t(rng, 3)
        proj = rng_fixed(rng)
        return (lambda: _loss(conv2d(x, w, b, stride=stride, padding=1), proj)), [x, w, b]
    return case


def _case_convt(rng):
    x, w, b = _t(rng, 1, 2, 3, 3), _t(rng, 2, 3, 4, 4), _t(rng, 3)
    proj = rng_fixed(rng)
    return (lambda: _loss(conv_transpose2d(x, w, b, stride=2, padding=1), proj)), [x, w, b]


def _case_softmax(rng):
    x = _t(rng, 3, 5)
    proj = rng_fixed(rng)
    return (lambda: _loss(T.softmax(x, axis=0), proj)), [x]


def _case_noise(rng):
    x = _t(rng, 3, 4)
    proj = rng_fixed(rng)
    seed = int(rng.integers(2**31))
    # same noise draw on every evaluation -> deterministic function
    return (lambda: _loss(T.add_noise(x, np.random.default_rng(seed), 0.1), proj)), [x]


def _case_detach(rng):
    x = _t(rng, 3, 4)
    proj = rng_fixed(rng)
    return (lambda: _loss(x * x + T.detach(x) * 0.0, proj)), [x]


def _case_layer_norm(rng):
    x, w, b = _t(rng, 3, 6), _t(rng, 6), _t(rng, 6)
    proj = rng_fixed(rng)
    return (lambda: _loss(T.layer_norm(x, w, b), proj)), [x, w, b]


OP_CASES: dict[str, Case] = {
    "add": _binary(T.add, (3, 4), (4,)),
    "sub": _binary(T.sub, (3, 4), (3, 1)),
    "mul": _binary(T.mul, (3, 4), (3, 4)),
    "div": _binary(T.div, (3, 4), (3, 4), {"low": 0.5, "high": 2.0}),
    "pow": _unary(lambda x: T.pow(x, 3.0)),
    "exp": _unary(T.exp),
    "log": _unary(T.log, low=0.2, high=3.0),
    "sqrt": _unary(T.sqrt, low=0.2, high=3.0),
    "maximum": _unary(lambda x: T.maximum(x, 0.3), away_from=0.3),
    "minimum": _unary(lambda x: T.minimum(x, -0.2), away_from=-0.2),
    "sum": _case_sum,
    "mean": _case_mean,
    "concat": _case_concat,
    "slice": _case_slice,
    "reshape": _case_reshape,
    "transpose": _case_transpose,
    "matmul": _case_matmul,
    "conv2d_stride1": _case_conv(1),
    "conv2d_stride2": _case_conv(2),
    "conv_transpose2d": _case_convt,
    "sigmoid": _unary(T.sigmoid),
    "tanh": _unary(T.tanh),
    "relu": _unary(T.relu, away_from=0.0),
    "softplus": _unary(T.softplus),
    "softmax": _case_softmax,
    "layer_norm": _case_layer_norm,
    "noise": _case_noise,
    "detach": _case_detach,
    # smooth branch of the rectified tanh; the pseudo-rule is exact there
    "rectified_tanh": _unary(rectified_tanh, low=0.05, high=2.5),
}


def check_op(name: str, seed: int, eps: float = 1e-3, tol: float = 1e-3) -> GradCheckReport:
    rng = np.random.default_rng(seed)
    f, inputs = OP_CASES[name](rng)
    return grad_check(f, inputs, eps=eps, tol=tol)


def heaviside_passthrough(x: np.ndarray) -> np.ndarray:
    """Backward of ``sum(heaviside(x))``: ones everywhere under the straight-through rule."""
    t = T.tensor(x, requires_grad=True)
    with T.Tape():
        T.sum(heaviside(t)).backward()
    return t.grad
