"""Acceptance criteria 1-10.

Each test records one PASS/FAIL line (shown in the terminal summary and on
stdout) and then asserts.  Criteria 6 and 7 train desk-scale models for hours
and only run when LOCI_NIGHTLY=1.
"""
import os
import time

import numpy as np
import pytest

import oracles
from conftest import ACCEPTANCE_LINES
from loci import autodiff as ad
from loci import datagen as D
from loci import pipeline, runner, scene
from loci.config import Config
from loci.datagen.blackout import SAFE_FRAMES, blackout_schedule
from loci.datagen.episode import Episode
from loci.evaluation import metrics as M
from loci.evaluation import tracking as TR
from loci.gate import OPEN, fixed_gates
from loci.gradsuite import run_suite
from loci.model import Model
from loci.trace import EpisodeTrace
from loci.training import checkpoint
from loci.training import losses as L
from loci.training.trainer import Trainer

NIGHTLY = os.environ.get("LOCI_NIGHTLY") == "1"

# pinned tolerances and budgets
GRAD_TOL = 1e-3
GRAD_SEEDS = 20
GRAD_BUDGET_S = 120.0
ORACLE_INSTANCES = 100
ORACLE_ATOL = 1e-5
ORACLE_BUDGET_S = 60.0
PERSISTENCE_STEPS = 50
OVERFIT_UPDATES = 2000
OVERFIT_REFERENCE = 100
OVERFIT_RATIO = 0.5
OVERFIT_BUDGET_S = 600.0
STUDY_TRAIN_EPISODES = 200
STUDY_TEST_EPISODES = 35
STUDY_UPDATES = 20_000
STUDY_SUCCESS_MARGIN = 0.20
BLACKOUT_FRAMES = 10_000
BLACKOUT_P = 0.2
BLACKOUT_TOL = 0.02


def report(n: int, ok: bool, detail: str):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def report_skip(n: int, reason: str):
    line = f"criterion {n}: SKIP {reason}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    pytest.skip(reason)


# 1 -------------------------------------------------------------------------

def test_criterion_1_gradient_suite():
    start = time.perf_counter()
    results = run_suite(seeds=GRAD_SEEDS, tol=GRAD_TOL)
    elapsed = time.perf_counter() - start
    failed = [r.name for r in results if not r.passed]
    worst = max(r.max_rel_error for r in results)
    report(1, not failed and elapsed < GRAD_BUDGET_S,
           f"{len(results)} checks x {GRAD_SEEDS} seeds, worst rel err {worst:.2e}, failed {failed or 'none'}, "
           f"{elapsed:.1f}s")


# 2 -------------------------------------------------------------------------

def _oracle_deviations(rng):
    dev = {}
    n = ORACLE_INSTANCES

    def track(name, value):
        dev[name] = max(dev.get(name, 0.0), float(value))

    for _ in range(n):
        h, w = int(rng.integers(2, 6)), int(rng.integers(2, 6))
        i, b, r = (rng.uniform(size=(3, h, w)) for _ in range(3))
        track("error_map", np.abs(scene.error_map(i, b, r) - oracles.error_map(i, b, r)).max())

        mx, my, s = rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(0.01, 1)
        got = scene.render_gaussian_np(np.array([mx, my, s, 0.0]), h, w)
        track("render_gaussian", np.abs(got - oracles.gaussian(mx, my, s, h, w)).max())

        k, d = int(rng.integers(1, 4)), int(rng.integers(1, 3))
        g, q, z = rng.uniform(size=(k, d)), rng.uniform(size=(k, h, w)), rng.uniform(size=k)
        tw, tb = rng.uniform(0.5, 2, k), rng.uniform(-1, 1, k)
        with ad.no_grad():
            got = scene.priority_attention(g[None], q[None], z[None], tw, tb).data[0]
        track("priority_attention", np.abs(got - oracles.priority_attention(g, q, z, tw, tb)).max())

        logits = rng.normal(0, 3, (k, h, w))
        with ad.no_grad():
            m = scene.postprocess_masks(logits[None], 0.1)
        want = oracles.masks(logits, 0.1)
        for got_m, want_m in zip((m.visibility, m.object, m.complement, m.background), want):
            track("postprocess_masks", np.abs(got_m.data[0] - want_m).max())

        mv, mo = rng.uniform(size=(h, w)), rng.uniform(size=(h, w))
        track("occlusion_state", abs(float(scene.occlusion_state(mv, mo)) - oracles.occlusion(mv, mo)))

        rgb, bgi = rng.uniform(size=(k, 3, h, w)), rng.uniform(size=(3, h, w))
        mm = rng.uniform(size=(k + 1, h, w))
        mm /= mm.sum(axis=0)
        with ad.no_grad():
            got = scene.compose(rgb[None], bgi[None], mm[None]).data[0]
        track("compose", np.abs(got - oracles.compose(rgb, bgi, mm)).max())

        img, pred = rng.uniform(size=(3, h, w)), rng.uniform(size=(3, h, w))
        mask = (rng.uniform(size=(h, w)) < 0.6).astype(float)
        mask[0, 0] = 1.0
        track("slot_error", abs(M.slot_error(img, pred, mask) - oracles.slot_error(img, pred, mask)))

        la, lb = rng.integers(0, 3, (h, w)), rng.integers(0, 3, (h, w))
        track("ari", abs(M.ari(la, lb) - oracles.ari(la, lb)))

        x, y = rng.uniform(size=(12, 13)), rng.uniform(size=(12, 13))
        track("ssim", abs(M.ssim(x[None], y[None]) - oracles.ssim(x, y)))

        t_len, k_len, o_len = 5, int(rng.integers(1, 4)), int(rng.integers(1, 4))
        pos = np.round(rng.uniform(0, 16, (t_len, k_len, 2)), 2)
        pred_pos = np.round(rng.uniform(0, 16, (t_len, k_len, 2)), 2)
        occ = rng.uniform(size=(t_len, k_len)) < 0.6
        gtp = np.round(rng.uniform(0, 16, (t_len, o_len, 2)), 2)
        ex = rng.uniform(size=(t_len, o_len)) < 0.8
        tr = EpisodeTrace.empty(t_len, k_len, 16, 16)
        tr.records["position"], tr.records["pred_position"], tr.records["occupied"] = pos, pred_pos, occ
        gt = Episode(np.zeros((t_len, 3, 16, 16), np.float32), np.where(ex[..., None], gtp, np.nan), ex,
                     np.zeros((t_len, 16, 16), np.uint8), np.zeros((3, 16, 16), np.float32),
                     np.ones((t_len, o_len), np.float32), np.ones(o_len, np.uint8))
        got = TR.tracking_error(tr, gt).errors
        want = oracles.tracking_errors(tr["occupied"], tr["position"].astype(float), tr["pred_position"].astype(float),
                                       gtp, ex, 16, 16)
        same_nan = np.array_equal(np.isnan(got), np.isnan(want))
        track("tracking_error", np.nanmax(np.abs(got - want), initial=0.0) if same_nan else np.inf)

        valid = rng.uniform(size=(t_len, k_len)) < 0.8
        c = TR.mota_counts(pos, valid, gtp, ex, cutoff=4.0)
        exact = (c.fn, c.fp, c.ids, c.gt) == oracles.mota_counts(pos, valid, gtp, ex, 4.0)
        track("mota", 0.0 if exact else np.inf)
    return dev


def test_criterion_2_formula_oracles():
    start = time.perf_counter()
    dev = _oracle_deviations(np.random.default_rng(2024))
    elapsed = time.perf_counter() - start
    bad = {k: v for k, v in dev.items() if not v <= ORACLE_ATOL}
    worst = max(dev.items(), key=lambda kv: kv[1])
    report(2, not bad and len(dev) == 11 and elapsed < ORACLE_BUDGET_S,
           f"{len(dev)} formulas x {ORACLE_INSTANCES} instances, worst {worst[0]}={worst[1]:.1e}, "
           f"over tolerance {sorted(bad) or 'none'}, {elapsed:.1f}s")


# 3 -------------------------------------------------------------------------

def test_criterion_3_gradient_isolation():
    cfg = Config()
    model = Model(cfg.arch(), seed=0)
    weights = L.LossWeights(reconstruction=0.0)
    data = D.generate("bounce-collision", 2, seed=3, length=4)
    closed = fixed_gates(np.zeros((2, cfg.model.num_slots)))
    rng = np.random.default_rng(0)
    flags = pipeline.StepFlags(training=True, update_enabled=True)
    with ad.Tape():
        state = pipeline.init_state(model, data.backgrounds, recruiting=False)
        total = None
        for t in range(3):
            res = pipeline.step(model, state, data.frames[:, t], flags, target=data.frames[:, t + 1],
                                weights=weights, rng=rng, gates=closed)
            state = res.state
            total = res.losses.total_tensor if total is None else total + res.losses.total_tensor
        total.backward()
    enc = {n: p.grad for n, p in model.params.items() if n.startswith("encoder.")}
    trans = {n: p.grad for n, p in model.params.items() if n.startswith("transition.")}
    enc_zero = all(g is None or not np.any(g) for g in enc.values())
    trans_nonzero = [n for n, g in trans.items() if g is not None and np.any(g)]
    report(3, enc_zero and bool(trans_nonzero),
           f"encoder params with nonzero grad: {sum(g is not None and bool(np.any(g)) for g in enc.values())}"
           f"/{len(enc)}, transition params with nonzero grad: {len(trans_nonzero)}/{len(trans)}")


# 4 -------------------------------------------------------------------------

def test_criterion_4_closed_gate_persistence():
    cfg = Config()
    model = Model(cfg.arch(), seed=0)
    data = D.generate("bounce-collision", 1, seed=0, length=2)
    k = cfg.model.num_slots
    closed = fixed_gates(np.zeros((1, k)))
    with ad.no_grad():
        state = pipeline.init_state(model, data.backgrounds, recruiting=False)
        state = pipeline.step(model, state, data.frames[:, 0]).state
        ref = [state.gestalt.data.copy(), state.position.data.copy(), state.hidden.data.copy()]
        same = np.ones(3, bool)
        for _ in range(PERSISTENCE_STEPS):
            state = pipeline.step(model, state, None, gates=closed).state
            now = (state.gestalt.data, state.position.data, state.hidden.data)
            same &= [np.array_equal(a, b) for a, b in zip(ref, now)]
    drift = float(np.abs(state.hidden.data - ref[2]).max())
    report(4, bool(same.all()),
           f"G identical={same[0]}, P identical={same[1]}, H identical={same[2]} (max |dH|={drift:.3g}) "
           f"over {PERSISTENCE_STEPS} blackout steps")


# 5 -------------------------------------------------------------------------

def _next_frame_bce(trainer, data, cfg) -> float:
    c = trainer.curriculum
    _, preds = runner.run(trainer.model, data.frames, data.backgrounds, teacher_forcing=cfg.train.teacher_forcing,
                          recruiting=c.recruiting(trainer.update), update_enabled=c.update_module(trainer.update))
    with ad.no_grad():
        return float(L.bce(preds[:, :-1], data.frames[:, 1:]).data)


def test_criterion_5_overfit_smoke():
    cfg = Config()
    cfg.train.updates = OVERFIT_UPDATES
    cfg.train.batch_size = 1
    # curriculum boundaries scaled to the run length: thirds of the budget
    cfg.train.phase2_start = OVERFIT_UPDATES // 3
    cfg.train.phase3_start = 2 * OVERFIT_UPDATES // 3
    data = D.generate("bounce-collision", 1, seed=0, length=10, pure=True)
    trainer = Trainer(cfg, data)
    marks = {}

    def cb(tr):
        if tr.update in (OVERFIT_REFERENCE, OVERFIT_UPDATES):
            marks[tr.update] = _next_frame_bce(tr, data, cfg)

    start = time.perf_counter()
    trainer.train(cb)
    elapsed = time.perf_counter() - start
    ratio = marks[OVERFIT_UPDATES] / marks[OVERFIT_REFERENCE]
    report(5, ratio <= OVERFIT_RATIO and elapsed < OVERFIT_BUDGET_S,
           f"BCE@{OVERFIT_REFERENCE}={marks[OVERFIT_REFERENCE]:.4f} BCE@{OVERFIT_UPDATES}="
           f"{marks[OVERFIT_UPDATES]:.4f} ratio={ratio:.3f} (<= {OVERFIT_RATIO}), {elapsed:.0f}s")


# 6, 7 ----------------------------------------------------------------------

@pytest.fixture(scope="module")
def desk_models():
    if not NIGHTLY:
        return None
    train = D.generate("vanish-control", STUDY_TRAIN_EPISODES, seed=100, objects=2)
    models = {}
    for mode in ("looped", "unlooped"):
        cfg = Config()
        cfg.train.updates = STUDY_UPDATES
        cfg.model.mode = mode
        models[mode] = Trainer(cfg, train).train()
    return models


def test_criterion_6_desk_occlusion_study(desk_models):
    if desk_models is None:
        report_skip(6, "nightly: set LOCI_NIGHTLY=1")
    from loci.evaluation.report import evaluate

    test = D.generate("vanish-control", STUDY_TEST_EPISODES, seed=200, objects=2)
    agg = {m: evaluate(model, test, ("tracking",)).aggregate for m, model in desk_models.items()}
    lo, un = agg["looped"], agg["unlooped"]
    ok = lo["tracking_occluded"] < un["tracking_occluded"] and \
        lo["tracking_success"] >= un["tracking_success"] + STUDY_SUCCESS_MARGIN
    report(6, ok, f"occluded error looped={lo['tracking_occluded']:.4f} unlooped={un['tracking_occluded']:.4f}, "
                  f"success looped={lo['tracking_success']:.2%} unlooped={un['tracking_success']:.2%}")


def test_criterion_7_voe_direction(desk_models):
    if desk_models is None:
        report_skip(7, "nightly: set LOCI_NIGHTLY=1")
    from loci.evaluation.report import evaluate

    ctl = D.generate("vanish-control", STUDY_TEST_EPISODES, seed=300, objects=2)
    sur = D.generate("vanish-surprise", STUDY_TEST_EPISODES, seed=300, objects=2)
    agg = evaluate(desk_models["looped"], D.Dataset.concat([ctl, sur]), ("voe",)).aggregate
    report(7, agg["voe_difference"] > 0,
           f"surprise - control max slot error={agg['voe_difference']:.4g}, effect size d={agg['voe_effect_size']:.3f}")


# 8 -------------------------------------------------------------------------

def test_criterion_8_blackout_scheduler():
    rng = np.random.default_rng(8)
    length = 100
    rows = [blackout_schedule(length, "fixed_p", rng, p=BLACKOUT_P) for _ in range(BLACKOUT_FRAMES // length)]
    sched = np.stack(rows)
    eligible = sched[:, SAFE_FRAMES:]
    rate = float(eligible.mean())
    safe_clean = not sched[:, :SAFE_FRAMES].any()
    report(8, abs(rate - BLACKOUT_P) <= BLACKOUT_TOL and safe_clean and eligible.size >= BLACKOUT_FRAMES * 0.9,
           f"rate {rate:.4f} over {eligible.size} eligible frames (p={BLACKOUT_P} +/- {BLACKOUT_TOL}), "
           f"first {SAFE_FRAMES} frames clean={safe_clean}")


# 9 -------------------------------------------------------------------------

def test_criterion_9_determinism_and_persistence(tmp_path):
    data = D.generate("bounce-collision", 2, seed=9, length=6)
    blobs, traces = [], []
    for run in ("a", "b"):
        cfg = Config()
        cfg.train.updates, cfg.train.batch_size, cfg.train.teacher_forcing = 3, 2, 2
        tr = Trainer(cfg, data, out_dir=tmp_path / run)
        model = tr.train()
        blobs.append((tmp_path / run / "final.lckp").read_bytes())
        tr_out, _ = runner.run(model, data.frames, data.backgrounds, teacher_forcing=2)
        traces.append(b"".join(t.encode() for t in tr_out))
    loaded, _ = checkpoint.load(tmp_path / "a" / "final.lckp")
    again, _ = runner.run(loaded, data.frames, data.backgrounds, teacher_forcing=2)
    reloaded = b"".join(t.encode() for t in again)
    ok = blobs[0] == blobs[1] and traces[0] == traces[1] and reloaded == traces[0]
    report(9, ok, f"checkpoints identical={blobs[0] == blobs[1]}, traces identical={traces[0] == traces[1]}, "
                  f"round-trip forward identical={reloaded == traces[0]}")


# 10 ------------------------------------------------------------------------

class SweepDecoder:
    """Scripted decoder: slot 0 is a fixed disc, slot 1 a rectangle sweeping across it column by column.

    Each pipeline step decodes twice (reconstruction, then prediction); the
    sweep advances once per step, so the reconstruction occlusion at step t is
    known in closed form.
    """

    def __init__(self, h, w, k):
        self.h, self.w, self.k, self.calls = h, w, k, 0
        yy, xx = np.mgrid[:h, :w]
        self.disc = (xx - w / 2) ** 2 + (yy - h / 2) ** 2 <= (h / 4) ** 2

    def cover(self, step):
        return np.arange(self.w)[None, :] < step

    def expected_occlusion(self, step):
        visible = np.count_nonzero(self.disc & ~self.cover(step))
        return np.float32(np.clip(1.0 - visible / (np.count_nonzero(self.disc) + 1e-4), 0.0, 1.0))

    def __call__(self, gestalt, position, active=None, rng=None, slot_ids=None):
        step = self.calls // 2
        self.calls += 1
        b = np.shape(gestalt)[0]
        logits = np.full((b, self.k, self.h, self.w), -6.0, np.float32)
        logits[:, 0][:, self.disc] = 6.0
        logits[:, 1][:, np.broadcast_to(self.cover(step), (self.h, self.w))] = 12.0
        rgb = np.full((b, self.k, 3, self.h, self.w), 0.5, np.float32)
        return ad.tensor(rgb), ad.tensor(logits)


def test_criterion_10_visibility_ablation_gates():
    cfg = Config()
    h, w, k = cfg.model.height, cfg.model.width, cfg.model.num_slots
    model = Model(cfg.arch(), mode="visibility", seed=0)
    sweep = SweepDecoder(h, w, k)
    model.decoder = sweep
    data = D.generate("vanish-control", 1, seed=10, objects=2, length=w + 4)
    traces, _ = runner.run(model, data.frames, data.backgrounds, recruiting=False)
    tr = traces[0]
    occ = tr["occlusion"][:, 0]
    known = np.array([sweep.expected_occlusion(t) for t in range(tr.length)])
    profile_ok = np.array_equal(occ, known)
    want = np.minimum(np.float32(1) - tr["occlusion"], np.float32(OPEN))
    ok = np.array_equal(tr["alpha_g"], want) and np.array_equal(tr["alpha_p"], want)
    report(10, ok and profile_ok and np.unique(occ).size > 5,
           f"alpha == 1 - O exactly on {tr.length} frames x {tr.num_slots} slots={ok}; swept profile matches "
           f"closed form={profile_ok}, O from {occ.min():.2f} to {occ.max():.2f} ({np.unique(occ).size} levels)")
