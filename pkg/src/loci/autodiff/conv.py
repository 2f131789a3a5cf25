"""2-D convolution and transposed convolution (NCHW layout, zero padding)."""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from loci.autodiff.engine import Tensor, _make, as_tensor
from loci.errors import ShapeError


def _windows(xp: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    # (N, C, Ho, Wo, kh, kw) view
    return sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]


def _col2im(cols: np.ndarray, out_shape: tuple, kh: int, kw: int, stride: int) -> np.ndarray:
    """Scatter-add (N, C, Ho, Wo, kh, kw) patches into an (N, C, Hp, Wp) canvas."""
    n, c, ho, wo = cols.shape[:4]
    canvas = np.zeros(out_shape, dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            canvas[:, :, i:i + stride * (ho - 1) + 1:stride, j:j + stride * (wo - 1) + 1:stride] += cols[..., i, j]
    return canvas


def conv_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def conv2d(x, weight, bias=None, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of ``x`` (N, C, H, W) with ``weight`` (O, C, kh, kw)."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeError(f"conv2d: expected 4-D input and weight, got {x.shape} and {weight.shape}")
    n, c, h, w = x.shape
    o, cw, kh, kw = weight.shape
    if c != cw:
        raise ShapeError(f"conv2d: input {x.shape} has {c} channels but weight {weight.shape} expects {cw}")
    xd, wd = x.data, weight.data
    xp = np.pad(xd, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else xd
    win = _windows(xp, kh, kw, stride)
    ho, wo = win.shape[2], win.shape[3]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * kh * kw)
    w2 = wd.reshape(o, -1)
    out = (cols @ w2.T).reshape(n, ho, wo, o).transpose(0, 3, 1, 2)
    parents = [x, weight]
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data.reshape(1, o, 1, 1)
        parents.append(bias)
    out = np.ascontiguousarray(out)

    def backward(g):
        g2 = g.transpose(0, 2, 3, 1).reshape(n * ho * wo, o)
        gx = gw = gb = None
        if x.requires_grad:
            dcols = (g2 @ w2).reshape(n, ho, wo, c, kh, kw).transpose(0, 3, 1, 2, 4, 5)
            gxp = _col2im(dcols, xp.shape, kh, kw, stride)
            gx = gxp[:, :, padding:padding + h, padding:padding + w] if padding else gxp
        if weight.requires_grad:
            gw = (g2.T @ cols).reshape(wd.shape)
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(0, 2, 3))
        return (gx, gw, gb) if bias is not None else (gx, gw)

    return _make(out, parents, backward, "conv2d")


def conv_transpose2d(x, weight, bias=None, stride: int = 1, padding: int = 0) -> Tensor:
    """Transposed convolution of ``x`` (N, Cin, H, W) with ``weight`` (Cin, Cout, kh, kw).

    Output size is ``(H - 1) * stride - 2 * padding + kh``; this is the adjoint of
    :func:`conv2d` with the same weight, stride and padding.
    """
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeError(f"conv_transpose2d: expected 4-D input and weight, got {x.shape} and {weight.shape}")
    n, cin, h, w = x.shape
    cw, cout, kh, kw = weight.shape
    if cin != cw:
        raise ShapeError(f"conv_transpose2d: input {x.shape} has {cin} channels but weight {weight.shape} expects {cw}")
    xd, wd = x.data, weight.data
    hp, wp = (h - 1) * stride + kh, (w - 1) * stride + kw
    hout, wout = hp - 2 * padding, wp - 2 * padding
    if hout <= 0 or wout <= 0:
        raise ShapeError(f"conv_transpose2d: padding {padding} too large for input {x.shape}")
    xflat = xd.transpose(0, 2, 3, 1).reshape(n * h * w, cin)
    w2 = wd.reshape(cin, cout * kh * kw)
    cols = (xflat @ w2).reshape(n, h, w, cout, kh, kw).transpose(0, 3, 1, 2, 4, 5)
    canvas = _col2im(cols, (n, cout, hp, wp), kh, kw, stride)
    out = canvas[:, :, padding:padding + hout, padding:padding + wout]
    parents = [x, weight]
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data.reshape(1, cout, 1, 1)
        parents.append(bias)
    out = np.ascontiguousarray(out)

    def backward(g):
        gp = np.pad(g, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else g
        win = _windows(gp, kh, kw, stride)  # (n, cout, h, w, kh, kw)
        gcols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * h * w, cout * kh * kw)
        gx = gw = gb = None
        if x.requires_grad:
            gx = (gcols @ w2.T).reshape(n, h, w, cin).transpose(0, 3, 1, 2)
        if weight.requires_grad:
            gw = (xflat.T @ gcols).reshape(wd.shape)
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(0, 2, 3))
        return (gx, gw, gb) if bias is not None else (gx, gw)

    return _make(out, parents, backward, "conv_transpose2d")
