"""Gradient checks for every primitive op and for the composite network blocks.

Composite blocks run on a miniature architecture in float64 with all
parameters randomised (zero-initialised heads would hide upstream
gradients).  Each check perturbs the block inputs and a few randomly chosen
parameter tensors.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from loci import autodiff as ad
from loci.autodiff.checks import OP_CASES, check_op
from loci.autodiff.gradcheck import GradCheckReport, grad_check
from loci.gate import GateDecision, blend
from loci.model import Model
from loci.nn.networks import ENCODER_CHANNELS, Arch

MINI = Arch(height=8, width=8, num_slots=2, gestalt_dim=4, hidden_dim=5, trunk_channels=(3, 4, 4, 4),
            position_hidden=6, transition_dim=6, heads=2)
BLOCK_EPS = 1e-6
COORDS = 6
PARAMS_PER_CHECK = 3


def _mini_model(rng: np.random.Generator) -> Model:
    model = Model(MINI, seed=int(rng.integers(2**31)))
    for p in model.params.values():
        p.data = (rng.standard_normal(p.shape) * 0.4).astype(p.data.dtype)
    return model


def _projection(rng, shape):
    return rng.standard_normal(shape)


def _pick_params(model: Model, prefix: str, rng) -> list:
    names = model.params.names(prefix)
    chosen = rng.choice(len(names), size=min(PARAMS_PER_CHECK, len(names)), replace=False)
    return [model.params[names[i]] for i in chosen]


def _positions(rng, b, k):
    p = np.zeros((b, k, 4))
    p[..., :2] = rng.uniform(-0.6, 0.6, (b, k, 2))
    p[..., 2] = rng.uniform(0.25, 0.5, (b, k))
    p[..., 3] = rng.standard_normal((b, k))
    return p


def _case_encode(rng):
    model = _mini_model(rng)
    a = MINI
    x = ad.tensor(rng.uniform(0, 1, (1, a.num_slots, ENCODER_CHANNELS, a.height, a.width)), requires_grad=True)
    w1, w2 = _projection(rng, (1, a.num_slots, a.gestalt_dim)), _projection(rng, (1, a.num_slots, 4))

    def f():
        g, p = model.encoder(x)
        return ad.sum(g * w1) + ad.sum(p * w2)

    return f, [x] + _pick_params(model, "encoder", rng)


def _case_decode(rng):
    model = _mini_model(rng)
    a = MINI
    g = ad.tensor(rng.uniform(0.1, 0.9, (1, a.num_slots, a.gestalt_dim)), requires_grad=True)
    p = ad.tensor(_positions(rng, 1, a.num_slots), requires_grad=True)
    w1 = _projection(rng, (1, a.num_slots, 3, a.height, a.width))
    w2 = _projection(rng, (1, a.num_slots, a.height, a.width))

    def f():
        rgb, logits = model.decoder(g, p)
        return ad.sum(rgb * w1) + ad.sum(logits * w2)

    return f, [g, p] + _pick_params(model, "decoder", rng)


def _case_transition(rng):
    model = _mini_model(rng)
    a = MINI
    k = a.num_slots
    g = ad.tensor(rng.standard_normal((1, k, a.gestalt_dim)), requires_grad=True)
    p = ad.tensor(_positions(rng, 1, k), requires_grad=True)
    ag = ad.tensor(rng.uniform(0.05, 0.95, (1, k)), requires_grad=True)
    ap = ad.tensor(rng.uniform(0.05, 0.95, (1, k)), requires_grad=True)
    h = ad.tensor(rng.standard_normal((1, k, 2, a.hidden_dim)) * 0.5, requires_grad=True)
    w1, w2 = _projection(rng, (1, k, a.gestalt_dim)), _projection(rng, (1, k, 4))
    w3 = _projection(rng, (1, k, 2, a.hidden_dim))

    def f():
        g2, p2, h2, _ = model.transition(g, p, ag, ap, h)
        return ad.sum(g2 * w1) + ad.sum(p2 * w2) + ad.sum(h2 * w3)

    return f, [g, p, ag, ap, h] + _pick_params(model, "transition", rng)


def _case_gate(rng):
    """Controller -> rectified tanh -> blend, on the open (smooth) branch of the gate."""
    model = _mini_model(rng)
    a = MINI
    k = a.num_slots
    # shift the output bias so every gate sits well inside the open branch
    out_b = model.params["gate.out.bias"]
    out_b.data = (np.abs(out_b.data) + 1.0).astype(out_b.data.dtype)
    for name in model.params.names("gate.out.weight"):
        model.params[name].data *= 0.1
    g_obs = ad.tensor(rng.uniform(0.1, 0.9, (1, k, a.gestalt_dim)), requires_grad=True)
    p_obs = ad.tensor(_positions(rng, 1, k), requires_grad=True)
    g_pred = ad.tensor(rng.uniform(0.1, 0.9, (1, k, a.gestalt_dim)), requires_grad=True)
    p_pred = ad.tensor(_positions(rng, 1, k), requires_grad=True)
    prev = _positions(rng, 1, k)
    o_obs, o_pred = rng.uniform(0, 1, (1, k)), rng.uniform(0, 1, (1, k))
    w1, w2 = _projection(rng, (1, k, a.gestalt_dim)), _projection(rng, (1, k, 4))

    def f():
        dec = model.controller((g_obs, p_obs, o_obs), (g_pred, p_pred, o_pred), prev)
        dec = GateDecision(ad.minimum(dec.alpha_g, 0.999), ad.minimum(dec.alpha_p, 0.999))
        g, p = blend((g_obs, p_obs), (g_pred, p_pred), dec)
        return ad.sum(g * w1) + ad.sum(p * w2)

    return f, [g_obs, p_obs, g_pred, p_pred] + _pick_params(model, "gate", rng)


BLOCK_CASES = {"encode": _case_encode, "decode": _case_decode, "transition": _case_transition,
               "gate_chain": _case_gate}


def check_block(name: str, seed: int, tol: float = 1e-3) -> GradCheckReport:
    rng = np.random.default_rng(seed)
    with ad.precision(np.float64):
        f, inputs = BLOCK_CASES[name](rng)
        return grad_check(f, inputs, eps=BLOCK_EPS, tol=tol, max_coords=COORDS, rng=rng)


def check_l0_passthrough(seed: int) -> float:
    """Max deviation of d/d(alpha) [w * sum step(alpha)] from the straight-through value ``w``."""
    rng = np.random.default_rng(seed)
    weight = 5e-6
    ag = ad.tensor(rng.uniform(0.01, 0.99, (2, 3)), requires_grad=True)
    ap = ad.tensor(rng.uniform(0.01, 0.99, (2, 3)), requires_grad=True)
    from loci.gate import gate_l0_loss

    with ad.Tape():
        gate_l0_loss(GateDecision(ag, ap), weight).backward()
    expect = weight / 2
    return float(max(np.abs(ag.grad - expect).max(), np.abs(ap.grad - expect).max()))


@dataclass
class SuiteResult:
    name: str
    max_rel_error: float
    tol: float
    seeds: int

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tol


def run_suite(modules=None, seeds: int = 20, tol: float = 1e-3, progress=None) -> list[SuiteResult]:
    """Run op and block checks; ``modules`` filters by name ("ops", "blocks" or any single case name)."""
    names = list(OP_CASES) + list(BLOCK_CASES) + ["gate_l0"]
    if modules:
        wanted = set(modules)
        if "ops" in wanted:
            wanted |= set(OP_CASES)
        if "blocks" in wanted:
            wanted |= set(BLOCK_CASES) | {"gate_l0"}
        unknown = wanted - set(names) - {"ops", "blocks"}
        if unknown:
            raise KeyError(", ".join(sorted(unknown)))
        names = [n for n in names if n in wanted]
    results = []
    for name in names:
        start = time.perf_counter()
        if name in OP_CASES:
            worst = max(check_op(name, s, tol=tol).max_rel_error for s in range(seeds))
        elif name in BLOCK_CASES:
            worst = max(check_block(name, s, tol=tol).max_rel_error for s in range(seeds))
        else:
            worst = max(check_l0_passthrough(s) for s in range(seeds)) / 5e-6
        res = SuiteResult(name, worst, tol, seeds)
        results.append(res)
        if progress is not None:
            progress(res, time.perf_counter() - start)
    return results
