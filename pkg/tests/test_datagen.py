import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from loci import datagen as D
from loci.datagen import container
from loci.datagen.bounce import BounceConfig, collide_pairs, gen_bounce, simulate, wall_limits
from loci.datagen.render import OBJECT, OCCLUDER, SUPERSAMPLE
from loci.datagen.vanish import FALL_FRAMES, VanishConfig, gen_vanish, occlusion_ratio
from loci.errors import ConfigError, ContractError, FormatError


# --- bouncing balls ---------------------------------------------------------

def test_single_ball_moves_in_a_straight_line():
    cfg = BounceConfig(balls=2, radius=2.0)
    pos, _ = simulate([[10.0, 12.0]], [[0.3, 0.2]], cfg, 20)
    start, end = pos[0, 0], pos[-1, 0]
    direction = (end - start) / np.linalg.norm(end - start)
    for p in pos[:, 0]:
        off = p - start
        deviation = abs(off[0] * direction[1] - off[1] * direction[0])
        assert deviation < 0.5


def test_wall_bounce_reverses_normal_velocity():
    cfg = BounceConfig(balls=2, radius=2.0)
    (_, xhi), _ = wall_limits(cfg)
    _, vel = simulate([[xhi - 0.3, 10.0]], [[1.0, 0.25]], cfg, 2)
    assert vel[1, 0, 0] == -1.0
    assert vel[1, 0, 1] == 0.25


def elastic_1d(m1, m2, u1, u2):
    return ((m1 - m2) * u1 + 2 * m2 * u2) / (m1 + m2), ((m2 - m1) * u2 + 2 * m1 * u1) / (m1 + m2)


def test_head_on_collision_swaps_velocities():
    pos = np.array([[10.0, 15.0], [15.5, 15.0]])
    vel = np.array([[0.8, 0.0], [-0.3, 0.0]])
    out = collide_pairs(pos, vel, radius=3.0)
    v1, v2 = elastic_1d(1.0, 1.0, 0.8, -0.3)
    np.testing.assert_allclose(out[:, 0], [v1, v2], atol=1e-12)
    np.testing.assert_allclose(out[:, 1], 0.0, atol=1e-12)


def test_noncollision_kind_lets_balls_pass():
    cfg = BounceConfig(balls=2, radius=3.0, collide=False)
    _, vel = simulate([[10.0, 15.0], [16.0, 15.0]], [[0.5, 0.0], [-0.5, 0.0]], cfg, 4)
    assert np.all(vel[:, 0, 0] == 0.5) and np.all(vel[:, 1, 0] == -0.5)


def test_radius_too_large_is_rejected():
    with pytest.raises(ConfigError):
        BounceConfig(radius=20.0).validate()
    with pytest.raises(ConfigError):
        BounceConfig(balls=5).validate()


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_kinetic_energy_is_conserved(seed):
    rng = np.random.default_rng(seed)
    cfg = BounceConfig(balls=3, radius=2.5)
    (xlo, xhi), (ylo, yhi) = wall_limits(cfg)
    pos = np.stack([rng.uniform(xlo, xhi, 3), rng.uniform(ylo, yhi, 3)], 1)
    vel = rng.uniform(-1, 1, (3, 2))
    _, v = simulate(pos, vel, cfg, 60)
    energy = (v ** 2).sum(axis=(1, 2))
    np.testing.assert_allclose(energy, energy[0], rtol=1e-9)


# --- rendering ground truth against a scalar oracle --------------------------

def _disc_cov_oracle(cx, cy, r, h, w):
    out = np.zeros((h, w))
    s = SUPERSAMPLE
    for i in range(h):
        for j in range(w):
            hits = 0
            for a in range(s):
                for b in range(s):
                    y = i + (a + 0.5) / s - 0.5
                    x = j + (b + 0.5) / s - 0.5
                    hits += (x - cx) ** 2 + (y - cy) ** 2 <= r * r
            out[i, j] = hits / (s * s)
    return out


def test_bounce_masks_and_visibility_match_depth_ordered_oracle():
    cfg = BounceConfig(height=16, width=16, length=6, balls=3, radius=3.0, speed=1.5, collide=False)
    ep = gen_bounce(cfg, np.random.default_rng(3))
    for t in range(cfg.length):
        covs = [_disc_cov_oracle(*ep.positions[t, k], cfg.radius, 16, 16) for k in range(3)]
        for i in range(16):
            for j in range(16):
                remaining, occ = 1.0, {}
                for k in range(3):  # depth equals slot index
                    occ[k + 1] = covs[k][i, j] * remaining
                    remaining *= 1 - covs[k][i, j]
                occ[0] = remaining
                best = max(sorted(occ), key=lambda key: (occ[key], -key))
                assert ep.masks[t, i, j] == best
        for k in range(3):
            whole = sum(1 for v in covs[k].ravel() if v > 0.5)
            seen = int(np.count_nonzero(ep.masks[t] == k + 1))
            expect = seen / whole if whole else 0.0
            assert ep.visibility[t, k] == pytest.approx(expect, abs=1e-7)


def test_frames_in_unit_range_and_positions_finite_when_present():
    ds = D.generate("bounce-collision", 2, seed=5)
    assert ds.frames.min() >= 0 and ds.frames.max() <= 1
    present = ds.existence.astype(bool)
    assert np.all(np.isfinite(ds.positions[present]))
    assert np.all(np.isnan(ds.positions[~present]))


# --- vanish scenario -----------------------------------------------------------

def test_control_objects_hide_and_reappear():
    ep = gen_vanish(VanishConfig(), np.random.default_rng(0), surprise=False)
    for k in np.nonzero(ep.kinds == OBJECT)[0]:
        vis = ep.visibility[:, k]
        present = np.nonzero(ep.existence[:, k])[0]
        hidden = present[vis[present] == 0]
        assert hidden.size > 0
        assert vis[present[0]:hidden[0]].max() > 0.9
        assert vis[hidden[-1] + 1:present[-1] + 1].max() > 0.9


def test_surprise_removes_object_while_hidden():
    rng_c, rng_s = np.random.default_rng(11), np.random.default_rng(11)
    ctl = gen_vanish(VanishConfig(), rng_c, surprise=False)
    sur = gen_vanish(VanishConfig(), rng_s, surprise=True)
    diff = np.nonzero((ctl.existence != sur.existence).any(axis=1))[0]
    t0 = diff[0]
    k = int(np.nonzero(ctl.existence[t0] != sur.existence[t0])[0][0])
    assert sur.existence[t0, k] == 0 and sur.existence[t0 - 1, k] == 1
    assert sur.visibility[t0 - 1, k] == 0 and ctl.visibility[t0, k] == 0
    assert not sur.existence[t0:, k].any()
    np.testing.assert_array_equal(ctl.frames[:t0], sur.frames[:t0])
    np.testing.assert_array_equal(ctl.windows, sur.windows)


def test_occlusion_ratio_targets_a_quarter_of_lifetime():
    ds = D.generate("vanish-control", 35, seed=21)
    ratios = np.concatenate([occlusion_ratio(ds.episode(i)) for i in range(35)])
    assert abs(ratios.mean() - 0.25) <= 0.05


def test_screen_is_frontmost_and_falls():
    ep = gen_vanish(VanishConfig(), np.random.default_rng(2), surprise=False)
    screen = int(np.nonzero(ep.kinds == OCCLUDER)[0][0])
    start, end = int(ep.windows[2]), int(ep.windows[3])
    assert end - start == FALL_FRAMES - 1
    area = [(ep.masks[t] == screen + 1).sum() for t in range(ep.frames.shape[0])]
    assert area[start - 1] > area[start] > area[end]
    assert area[-1] == 0
    # nothing ever shows through the screen before it falls
    before = ep.masks[:start]
    assert not np.any((before != screen + 1) & (ep.masks[0] == screen + 1)[None])


def test_unreachable_occlusion_is_rejected():
    with pytest.raises(ConfigError):
        VanishConfig(occlusion=0.9).validate()
    with pytest.raises(ConfigError):
        VanishConfig(objects=3).validate()


# --- blackout ------------------------------------------------------------------

def test_blackout_first_frames_are_safe():
    rng = np.random.default_rng(0)
    for _ in range(200):
        m = D.blackout_schedule(30, "fixed_p", rng, p=0.9)
        assert not m[:10].any()


def test_blackout_zero_probability():
    assert not D.blackout_schedule(50, "fixed_p", np.random.default_rng(0), p=0.0).any()


def test_blackout_rate_matches_p():
    rng = np.random.default_rng(1)
    masks = np.concatenate([D.blackout_schedule(110, "fixed_p", rng, p=0.2)[10:] for _ in range(100)])
    assert masks.size == 10_000
    assert abs(masks.mean() - 0.2) <= 0.02


def test_ramp_interpolates_probability():
    assert D.ramp_probability(0.0, 0.1, 0.45) == 0.1
    assert D.ramp_probability(1.0, 0.1, 0.45) == pytest.approx(0.45)
    assert D.ramp_probability(0.5, 0.1, 0.45) == pytest.approx(0.275)
    rng = np.random.default_rng(2)
    late = np.concatenate([D.blackout_schedule(1010, "ramp", rng, progress=1.0)[10:] for _ in range(10)])
    assert abs(late.mean() - 0.45) < 0.03


def test_blackout_errors():
    rng = np.random.default_rng(0)
    with pytest.raises(ConfigError):
        D.blackout_schedule(20, "fixed_p", rng, p=1.5)
    with pytest.raises(ContractError):
        D.blackout_schedule(10, "fixed_p", rng, p=0.2)
    with pytest.raises(ConfigError):
        D.blackout_schedule(20, "sometimes", rng)


# --- container ------------------------------------------------------------------

def test_generation_is_deterministic_and_round_trips():
    a = container.encode(D.generate("vanish-surprise", 2, seed=7))
    b = container.encode(D.generate("vanish-surprise", 2, seed=7))
    assert a == b
    back = container.decode(a)
    assert container.encode(back) == a


def test_container_header_layout():
    ds = D.generate("bounce-noncollision", 1, seed=0, length=5)
    blob = container.encode(ds)
    assert blob[:4] == b"LOCI"
    import struct

    version, n, t, h, w, c, k = struct.unpack_from("<H6I", blob, 4)
    assert (version, n, t, h, w, c, k) == (1, 1, 5, 32, 32, 3, 3)
    frames = np.frombuffer(blob, "<f4", count=t * h * w * c, offset=30).reshape(t, h, w, c)
    np.testing.assert_array_equal(frames.transpose(0, 3, 1, 2), ds.frames[0])


def test_container_rejects_corruption():
    blob = container.encode(D.generate("bounce-collision", 1, seed=0, length=3))
    with pytest.raises(FormatError):
        container.decode(b"XXXX" + blob[4:])
    with pytest.raises(FormatError):
        container.decode(blob[:-1])
    with pytest.raises(FormatError):
        container.decode(blob[:10])


def test_unknown_scenario():
    with pytest.raises(ConfigError):
        D.generate("juggling", 1)
