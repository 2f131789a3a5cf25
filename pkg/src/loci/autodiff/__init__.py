"""Minimal reverse-mode automatic differentiation over numpy arrays."""
from loci.autodiff.engine import (
    Tape,
    Tensor,
    add,
    add_noise,
    as_tensor,
    clip,
    concat,
    default_dtype,
    detach,
    div,
    exp,
    getitem,
    grad_enabled,
    layer_norm,
    log,
    matmul,
    maximum,
    mean,
    minimum,
    mul,
    neg,
    no_grad,
    pad2d,
    pow,
    precision,
    relu,
    reshape,
    sigmoid,
    softmax,
    softplus,
    sqrt,
    stack,
    sub,
    sum,
    swap_last,
    tanh,
    tensor,
    transpose,
    where,
)
from loci.autodiff.conv import conv2d, conv_output_size, conv_transpose2d
from loci.autodiff.custom import custom_grad, get_op, heaviside, rectified_tanh, registered_ops
from loci.autodiff.gradcheck import GradCheckReport, grad_check
