"""Central-difference gradient checking."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from loci.autodiff.engine import Tape, Tensor, no_grad, precision
from loci.errors import ContractError, NumericError


@dataclass
class GradCheckReport:
    max_rel_error: float
    tol: float
    checked: int
    worst: tuple = ()
    per_input: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tol

    def __str__(self):
        status = "ok" if self.passed else "FAIL"
        return f"max_rel_err={self.max_rel_error:.3e} tol={self.tol:.0e} coords={self.checked} {status}"


def _trace_nonfinite(tape: Tape) -> str:
    names = []
    for node in tape.nodes:
        names.append(node.name)
        if not np.all(np.isfinite(node.out.data)):
            return " -> ".join(names[-6:]) + " (first non-finite output)"
    return " -> ".join(names[-6:])


def _scalar(f: Callable[[], Tensor]) -> float:
    with no_grad():
        y = f()
    val = np.asarray(y.data, dtype=np.float64)
    if val.size != 1:
        raise ContractError(f"grad_check needs a scalar-valued function, got shape {y.shape}")
    return float(val.reshape(()))


def grad_check(
    f: Callable[[], Tensor],
    inputs: Tensor | Sequence[Tensor],
    eps: float = 1e-3,
    tol: float = 1e-3,
    *,
    floor: float = 1e-2,
    max_coords: int | None = None,
    rng: np.random.Generator | None = None,
    dtype=np.float64,
) -> GradCheckReport:
    """Compare reverse-mode gradients of ``f()`` w.r.t. ``inputs`` with central differences.

    ``f`` takes no arguments and must close over ``inputs``; their data is cast
    to ``dtype`` for the duration of the check and restored afterwards. The
    error per coordinate is ``|a - n| / max(|a|, |n|, floor)``.  When
    ``max_coords`` is set, only that many randomly chosen coordinates per input
    are perturbed.
    """
    if eps <= 0:
        raise ContractError("eps must be positive")
    if isinstance(inputs, Tensor):
        inputs = [inputs]
    rng = rng or np.random.default_rng(0)
    saved = [(t.data, t.grad, t.requires_grad) for t in inputs]
    try:
        with precision(dtype):
            for t in inputs:
                t.data = t.data.astype(dtype, copy=True)
                t.grad = None
                t.requires_grad = True
            with Tape() as tape:
                y = f()
                if y.size != 1:
                    raise ContractError(f"grad_check needs a scalar-valued function, got shape {y.shape}")
                if not np.all(np.isfinite(y.data)):
                    raise NumericError(f"non-finite output in grad_check: {_trace_nonfinite(tape)}")
                trace = _trace_nonfinite(tape)
                y.backward()
            analytic = [np.zeros_like(t.data) if t.grad is None else np.asarray(t.grad, np.float64) for t in inputs]
            for a in analytic:
                if not np.all(np.isfinite(a)):
                    raise NumericError(f"non-finite gradient in grad_check: {trace}")

            worst_err, worst, checked, per_input = 0.0, (), 0, []
            for i, t in enumerate(inputs):
                flat = t.data.reshape(-1)
                coords = np.arange(flat.size)
                if max_coords is not None and flat.size > max_coords:
                    coords = rng.choice(flat.size, size=max_coords, replace=False)
                in_err = 0.0
                for c in coords:
                    orig = flat[c]
                    flat[c] = orig + eps
                    fp = _scalar(f)
                    flat[c] = orig - eps
                    fm = _scalar(f)
                    flat[c] = orig
                    if not (np.isfinite(fp) and np.isfinite(fm)):
                        raise NumericError(f"non-finite value while perturbing input {i}: {trace}")
                    num = (fp - fm) / (2.0 * eps)
                    ana = float(analytic[i].reshape(-1)[c])
                    err = abs(ana - num) / max(abs(ana), abs(num), floor)
                    checked += 1
                    in_err = max(in_err, err)
                    if err > worst_err:
                        worst_err, worst = err, (i, int(c), ana, num)
                per_input.append(in_err)
    finally:
        for t, (data, grad, req) in zip(inputs, saved):
            t.data, t.grad, t.requires_grad = data, grad, req
    return GradCheckReport(worst_err, tol, checked, worst, per_input)
