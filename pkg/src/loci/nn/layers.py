"""Parameterised building blocks over :class:`ParamStore`."""
from __future__ import annotations

import numpy as np

from loci import autodiff as ad
from loci.nn.params import ParamStore


class Linear:
    def __init__(self, store: ParamStore, name: str, n_in: int, n_out: int, zero: bool = False, gain: float = 1.0,
                 bias: float = 0.0):
        self.n_in, self.n_out = n_in, n_out
        if zero:
            self.weight = store.zeros(f"{name}.weight", (n_in, n_out))
        else:
            self.weight = store.glorot(f"{name}.weight", (n_in, n_out), n_in, n_out, gain)
        self.bias = store.full(f"{name}.bias", (n_out,), bias)

    def __call__(self, x):
        return ad.matmul(x, self.weight) + self.bias


class Conv2d:
    def __init__(self, store: ParamStore, name: str, c_in: int, c_out: int, kernel: int, stride: int = 1,
                 padding: int | None = None):
        fan_in, fan_out = c_in * kernel * kernel, c_out * kernel * kernel
        self.weight = store.glorot(f"{name}.weight", (c_out, c_in, kernel, kernel), fan_in, fan_out)
        self.bias = store.zeros(f"{name}.bias", (c_out,))
        self.stride = stride
        self.padding = kernel // 2 if padding is None else padding

    def __call__(self, x):
        return ad.conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)


class ConvTranspose2d:
    def __init__(self, store: ParamStore, name: str, c_in: int, c_out: int, kernel: int = 4, stride: int = 2,
                 padding: int = 1, bias: float | np.ndarray = 0.0):
        fan_in, fan_out = c_in * kernel * kernel // (stride * stride), c_out * kernel * kernel // (stride * stride)
        self.weight = store.glorot(f"{name}.weight", (c_in, c_out, kernel, kernel), fan_in, fan_out)
        self.bias = store.add(f"{name}.bias", np.broadcast_to(np.asarray(bias, dtype=np.float64), (c_out,)))
        self.stride, self.padding = stride, padding

    def __call__(self, x):
        return ad.conv_transpose2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)


class LayerNorm:
    def __init__(self, store: ParamStore, name: str, dim: int):
        self.weight = store.full(f"{name}.weight", (dim,), 1.0)
        self.bias = store.zeros(f"{name}.bias", (dim,))

    def __call__(self, x):
        return ad.layer_norm(x, self.weight, self.bias)


class MultiHeadAttention:
    """Scaled dot-product self-attention across the token axis of ``(B, N, D)`` inputs."""

    def __init__(self, store: ParamStore, name: str, dim: int, heads: int):
        if dim % heads:
            raise ValueError(f"attention width {dim} not divisible by {heads} heads")
        self.dim, self.heads, self.head_dim = dim, heads, dim // heads
        self.q = Linear(store, f"{name}.query", dim, dim)
        self.k = Linear(store, f"{name}.key", dim, dim)
        self.v = Linear(store, f"{name}.value", dim, dim)
        self.out = Linear(store, f"{name}.out", dim, dim)

    def _split(self, x, b, n):
        return ad.transpose(ad.reshape(x, (b, n, self.heads, self.head_dim)), (0, 2, 1, 3))

    def __call__(self, x, key_mask=None):
        """``key_mask`` (B, N) bool hides masked tokens from every query."""
        b, n, _ = x.shape
        q, k, v = self._split(self.q(x), b, n), self._split(self.k(x), b, n), self._split(self.v(x), b, n)
        scores = ad.matmul(q, ad.swap_last(k)) * (1.0 / np.sqrt(self.head_dim))
        if key_mask is not None:
            hide = np.where(np.asarray(key_mask, dtype=bool), 0.0, -1e4).astype(scores.dtype)
            scores = scores + hide[:, None, None, :]
        mixed = ad.matmul(ad.softmax(scores, axis=-1), v)
        mixed = ad.reshape(ad.transpose(mixed, (0, 2, 1, 3)), (b, n, self.dim))
        return self.out(mixed)
