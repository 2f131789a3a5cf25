import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from loci.datagen.episode import Episode
from loci.errors import ContractError, ShapeError
from loci.evaluation import metrics as M
from loci.evaluation import tracking as TR
from loci.trace import EpisodeTrace


# --- slot error ------------------------------------------------------------------

def test_slot_error_perfect_prediction_is_zero():
    img = np.random.default_rng(0).uniform(size=(3, 6, 6))
    assert M.slot_error(img, img, np.ones((6, 6))) == 0.0


def test_slot_error_constant_residual():
    img = np.zeros((3, 5, 5))
    mask = np.zeros((5, 5))
    mask[1:4, 1:4] = 1
    assert M.slot_error(img + 0.5, img, mask) == pytest.approx(0.25)


def test_slot_error_empty_mask_is_missing():
    assert math.isnan(M.slot_error(np.zeros((3, 4, 4)), np.ones((3, 4, 4)), np.zeros((4, 4))))


def test_slot_error_matches_oracle():
    rng = np.random.default_rng(1)
    for _ in range(100):
        h, w = rng.integers(2, 7, size=2)
        a, b = rng.uniform(size=(3, h, w)), rng.uniform(size=(3, h, w))
        m = rng.uniform(size=(h, w))
        assert abs(M.slot_error(a, b, m) - oracles.slot_error(a, b, m)) <= 1e-5


def test_slot_error_normalises_scaled_binary_masks():
    rng = np.random.default_rng(2)
    a, b = rng.uniform(size=(3, 5, 5)), rng.uniform(size=(3, 5, 5))
    m = (rng.uniform(size=(5, 5)) > 0.5).astype(float)
    assert M.slot_error(a, b, 3.0 * m) == pytest.approx(M.slot_error(a, b, m))


# --- image metrics -----------------------------------------------------------------

def test_psnr_and_ssim_identity():
    img = np.random.default_rng(3).uniform(size=(3, 16, 16))
    assert M.psnr(img, img) == 99.0
    assert M.ssim(img, img) == pytest.approx(1.0)


def test_psnr_matches_oracle():
    rng = np.random.default_rng(4)
    for _ in range(20):
        a, b = rng.uniform(size=(3, 4, 4)), rng.uniform(size=(3, 4, 4))
        assert M.psnr(a, b) == pytest.approx(oracles.psnr(a, b), abs=1e-9)


def test_ssim_matches_windowed_oracle():
    rng = np.random.default_rng(5)
    for _ in range(5):
        x, y = rng.uniform(size=(13, 14)), rng.uniform(size=(13, 14))
        assert abs(M.ssim(x, y) - oracles.ssim(x, y)) <= 1e-5


def test_image_metric_shape_mismatch():
    with pytest.raises(ShapeError):
        M.psnr(np.zeros((3, 4, 4)), np.zeros((3, 4, 5)))
    with pytest.raises(ShapeError):
        M.ssim(np.zeros((3, 12, 12)), np.zeros((3, 12, 13)))


def test_ari_boundaries():
    labels = np.array([0, 0, 1, 1, 2, 2])
    assert M.ari(labels, labels) == 1.0
    assert M.ari(np.zeros(6), labels) == 0.0


def test_ari_matches_pair_counting_on_16_pixels():
    a = np.array([0, 0, 0, 1, 1, 1, 2, 2, 2, 2, 0, 1, 2, 0, 1, 1]).reshape(4, 4)
    b = np.array([1, 1, 0, 0, 2, 2, 2, 2, 1, 1, 0, 0, 2, 2, 1, 0]).reshape(4, 4)
    assert M.ari(a, b) == pytest.approx(oracles.ari(a, b), abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 3), min_size=4, max_size=20), st.data())
def test_ari_symmetric_and_permutation_invariant(a, data):
    b = data.draw(st.lists(st.integers(0, 3), min_size=len(a), max_size=len(a)))
    a, b = np.array(a), np.array(b)
    assert M.ari(a, b) == pytest.approx(M.ari(b, a), abs=1e-12)
    perm = np.array([2, 0, 3, 1])
    assert M.ari(perm[a], b) == pytest.approx(M.ari(a, b), abs=1e-12)
    assert M.ari(a, b) == pytest.approx(oracles.ari(a, b), abs=1e-12)


# --- position from mask --------------------------------------------------------------

def test_position_from_centered_square():
    m = np.zeros((8, 8))
    m[2:6, 2:6] = 1
    assert M.position_from_mask(m, 0.5) == (3.5, 3.5)


def test_position_from_l_shape_is_box_centre():
    m = np.zeros((8, 8))
    m[1:7, 1] = 1
    m[6, 1:6] = 1
    assert M.position_from_mask(m, 0.5) == (3.0, 3.5)


def test_position_from_empty_mask():
    assert M.position_from_mask(np.zeros((4, 4)), 0.5) is None


def test_position_from_random_blobs_matches_scan():
    rng = np.random.default_rng(6)
    for _ in range(100):
        m = rng.uniform(size=(7, 9)) * (rng.uniform(size=(7, 9)) > 0.7)
        assert M.position_from_mask(m, 0.5) == oracles.bbox_center(m, 0.5)


# --- tracking ------------------------------------------------------------------------

def _trace(positions, pred=None, occupied=None, h=32, w=32, mass=None):
    positions = np.asarray(positions, float)
    t, k = positions.shape[:2]
    tr = EpisodeTrace.empty(t, k, h, w)
    tr.records["position"] = positions
    tr.records["pred_position"] = positions if pred is None else pred
    tr.records["occupied"] = 1 if occupied is None else occupied
    tr.records["object_mass"] = 100.0 if mass is None else mass
    return tr


def _gt(positions, exists=None, vis=None, kinds=None, h=32, w=32):
    positions = np.asarray(positions, float)
    t, o = positions.shape[:2]
    exists = np.ones((t, o), np.uint8) if exists is None else np.asarray(exists, np.uint8)
    vis = np.ones((t, o), np.float32) if vis is None else np.asarray(vis, np.float32)
    kinds = np.ones(o, np.uint8) if kinds is None else np.asarray(kinds, np.uint8)
    return Episode(np.zeros((t, 3, h, w), np.float32), positions, exists, np.zeros((t, h, w), np.uint8),
                   np.zeros((3, h, w), np.float32), vis, kinds)


def test_perfect_tracking():
    pos = np.round(np.random.default_rng(7).uniform(0, 31, (6, 2, 2)) * 4) / 4  # exact in float32 traces
    s = TR.tracking_error(_trace(pos, np.roll(pos, -1, axis=0)), _gt(pos))
    assert np.nanmax(s.errors) == 0.0
    assert s.success.all()


def test_tracking_error_boundary_on_32_pixels():
    assert TR.diagonal(32, 32) == pytest.approx(math.sqrt(2048))
    gt = np.zeros((2, 1, 2)) + 10.0
    est = gt.copy()
    est[..., 0] += 0.1 * math.sqrt(2048)
    s = TR.tracking_error(_trace(est, est), _gt(gt))
    assert s.errors[1, 0] == pytest.approx(0.1)


def test_tracking_error_hand_built_three_frames():
    # slot 0 locks to object 1 (nearer at frame 0), slot 1 to object 0
    gt = np.array([[[0, 0], [10, 0]], [[1, 0], [10, 1]], [[2, 0], [10, 2]]], float)
    blended = np.array([[[9, 0], [1, 1]], [[0, 0], [0, 0]], [[0, 0], [0, 0]]], float)
    pred = np.array([[[10, 4], [1, 0]], [[10, 2], [5, 0]], [[0, 0], [0, 0]]], float)
    vis = np.array([[1, 1], [0, 1], [1, 1]], float)
    s = TR.tracking_error(_trace(blended, pred), _gt(gt, vis=vis))
    d = math.sqrt(32 ** 2 + 32 ** 2)
    assert s.assignment.pairs == {0: 1, 1: 0}
    expect = np.array([[math.sqrt(2), 1], [0, 3], [3, 0]]) / d  # rows t, cols object
    np.testing.assert_allclose(s.errors, expect, atol=1e-12)
    assert s.visible_mean == pytest.approx((math.sqrt(2) + 1 + 3 + 3 + 0) / 5 / d)
    assert s.occluded_mean == pytest.approx(0.0)
    np.testing.assert_allclose(s.final, [3 / d, 0.0])


def test_tracking_errors_scale_invariant():
    rng = np.random.default_rng(8)
    gt, est = rng.uniform(0, 16, (4, 2, 2)), rng.uniform(0, 16, (4, 2, 2))
    a = TR.tracking_error(_trace(est, est, h=16, w=16), _gt(gt, h=16, w=16))
    b = TR.tracking_error(_trace(2 * est, 2 * est, h=32, w=32), _gt(2 * gt, h=32, w=32))
    np.testing.assert_allclose(a.errors, b.errors, atol=1e-12)


def test_empty_trace_rejected():
    with pytest.raises(ContractError):
        TR.tracking_error(_trace(np.zeros((0, 1, 2))), _gt(np.zeros((1, 1, 2))))


def test_untracked_object_counts_as_failure():
    s = TR.tracking_error(_trace(np.zeros((3, 1, 2)), occupied=0), _gt(np.zeros((3, 1, 2))))
    assert s.success_rate == 0.0


# --- MOTA --------------------------------------------------------------------------------

def test_mota_perfect():
    pos = np.random.default_rng(9).uniform(0, 31, (5, 3, 2))
    score, c = TR.mota([_trace(pos)], [_gt(pos)])
    assert score == 1.0 and (c.fn, c.fp, c.ids) == (0, 0, 0)


def test_mota_no_detections():
    pos = np.zeros((4, 2, 2)) + 5
    score, c = TR.mota([_trace(pos, occupied=0)], [_gt(pos)])
    assert score == 0.0 and c.fn == c.gt == 8


def test_mota_four_frame_switch_and_false_positive():
    gt = np.array([[[5, 5], [20, 20]]] * 4, float)
    hyp = np.array([
        [[5, 5], [20, 20], [30, 2]],
        [[5, 5], [20, 20], [30, 2]],
        [[20, 20], [5, 5], [30, 2]],  # both objects switch slots
        [[20, 20], [5, 5], [30, 2]],
    ], float)
    valid = np.array([[1, 1, 0], [1, 1, 1], [1, 1, 0], [1, 1, 0]], bool)
    c = TR.mota_counts(hyp, valid, gt, np.ones((4, 2), bool), cutoff=4.5)
    assert (c.fn, c.fp, c.ids, c.gt) == (0, 1, 2, 8)
    assert c.mota == pytest.approx(1 - 3 / 8)


def test_mota_matches_brute_force_oracle():
    rng = np.random.default_rng(10)
    for _ in range(100):
        t, k, o = 4, int(rng.integers(1, 4)), int(rng.integers(1, 4))
        hyp = rng.uniform(0, 10, (t, k, 2))
        gt = rng.uniform(0, 10, (t, o, 2))
        valid = rng.uniform(size=(t, k)) < 0.8
        exists = rng.uniform(size=(t, o)) < 0.8
        c = TR.mota_counts(hyp, valid, gt, exists, cutoff=4.0)
        assert (c.fn, c.fp, c.ids, c.gt) == oracles.mota_counts(hyp, valid, gt, exists, 4.0)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_mota_at_most_one(seed):
    rng = np.random.default_rng(seed)
    hyp, gt = rng.uniform(0, 8, (3, 2, 2)), rng.uniform(0, 8, (3, 2, 2))
    c = TR.mota_counts(hyp, rng.uniform(size=(3, 2)) < 0.7, gt, rng.uniform(size=(3, 2)) < 0.7, 3.0)
    if c.gt:
        assert c.mota <= 1.0
        assert (c.mota == 1.0) == (c.fn + c.fp + c.ids == 0)


def test_detection_gating():
    pos = np.array([[[5, 5], [40, 5], [6, 6]]], float)
    tr = _trace(pos, mass=np.array([[20.0, 20.0, 1.0]]))
    assert TR.mass_threshold(32, 32) == pytest.approx(100 * 1024 / 9600)
    np.testing.assert_array_equal(TR.detections(tr)[0], [True, False, False])


# --- gates and surprise ------------------------------------------------------------------------

def test_gate_stats_boundaries():
    vis = np.array([0.0, 0.5, 1.0, 0.0])
    assert TR.gate_stats(np.zeros(4), vis).visible == 1.0
    assert TR.gate_stats(np.ones(4), vis).occluded == 0.0


def test_gate_stats_mixed_hand_average():
    alpha = np.array([0.2, 0.4, 0.9, 0.0, 1.0])
    vis = np.array([0.0, 0.0, 0.3, 1.0, 0.0])
    s = TR.gate_stats(alpha, vis)
    assert s.occluded == pytest.approx((0.8 + 0.6 + 0.0) / 3)
    assert s.visible == pytest.approx((0.1 + 1.0) / 2)
    assert (s.count_occluded, s.count_visible) == (3, 2)


def test_window_max_slot_error_aligns_prediction_records():
    tr = EpisodeTrace.empty(6, 2, 8, 8)
    tr.records["slot_error"] = np.arange(12, dtype=float).reshape(6, 2)
    # frames 3..4 are predicted by records 2..3
    assert TR.window_max_slot_error(tr, 3, 4) == 7.0


def test_voe_summary_effect_size():
    v = TR.VoeSummary(np.array([1.0, 2.0, 3.0]), np.array([2.0, 3.0, 4.0]))
    assert v.difference == pytest.approx(1.0)
    assert v.effect_size == pytest.approx(1.0)
