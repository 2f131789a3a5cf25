"""Object-level instruments: locked tracking error, MOTA, gate statistics and surprise summaries."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from loci.datagen.episode import Episode
from loci.datagen.render import OBJECT
from loci.errors import ContractError
from loci.trace import EpisodeTrace

SUCCESS_THRESHOLD = 0.1
_FORBIDDEN = 1e9


def diagonal(h: int, w: int) -> float:
    return float(np.hypot(h, w))


def mass_threshold(h: int, w: int) -> float:
    """Object-mask mass needed for a slot to count as a detection, scaled from 100 at 120x80."""
    return 100.0 * h * w / (120.0 * 80.0)


@dataclass
class Assignment:
    """Slot to ground-truth object pairs, each locked at the slot's first detection."""

    pairs: dict = field(default_factory=dict)  # slot -> object index
    locked_at: dict = field(default_factory=dict)  # slot -> frame


def lock_assignment(occupied: np.ndarray, positions: np.ndarray, gt_positions: np.ndarray,
                    gt_exists: np.ndarray) -> Assignment:
    """Greedy in time: when a slot first becomes occupied it locks onto the nearest free existing object.

    ``occupied`` (T, K), ``positions`` (T, K, 2), ``gt_positions`` (T, O, 2),
    ``gt_exists`` (T, O).
    """
    out = Assignment()
    taken = set()
    for t in range(occupied.shape[0]):
        for k in np.nonzero(occupied[t])[0]:
            k = int(k)
            if k in out.locked_at:
                continue
            out.locked_at[k] = t
            cands = [o for o in np.nonzero(gt_exists[t])[0] if int(o) not in taken]
            if not cands:
                continue
            d = [np.hypot(*(positions[t, k] - gt_positions[t, o])) for o in cands]
            best = int(cands[int(np.argmin(d))])
            out.pairs[k] = best
            taken.add(best)
    return out


@dataclass
class TrackingSummary:
    errors: np.ndarray  # (T, O) normalised error of the slot locked to each object, NaN where undefined
    assignment: Assignment
    visible_mean: float
    occluded_mean: float
    final: np.ndarray  # (O,) final error per tracked object, NaN when never tracked
    success: np.ndarray  # (O,) bool
    objects: np.ndarray  # indices of the objects summarised

    @property
    def success_rate(self) -> float:
        return float(self.success.mean()) if self.success.size else float("nan")


def _nanmean(x) -> float:
    x = np.asarray(x, np.float64)
    x = x[np.isfinite(x)]
    return float(x.mean()) if x.size else float("nan")


def tracking_error(trace: EpisodeTrace, gt: Episode, kinds=(OBJECT,)) -> TrackingSummary:
    """Per-frame distance between a locked slot's predicted position and its object, over the image diagonal.

    The position used for frame ``t`` is the prediction made at ``t - 1``
    (the blended estimate at ``t = 0``).  Summaries cover objects whose kind
    is in ``kinds``; an object with no locked slot counts as a failed track.
    """
    if trace.length == 0:
        raise ContractError("tracking_error: empty trace")
    t_len = min(trace.length, gt.positions.shape[0])
    d = diagonal(trace.height, trace.width)
    est = np.array(trace["position"][:t_len], np.float64)
    est[1:] = trace["pred_position"][: t_len - 1]
    gt_pos = np.asarray(gt.positions[:t_len], np.float64)
    exists = np.asarray(gt.existence[:t_len], bool)
    assign = lock_assignment(trace["occupied"][:t_len].astype(bool), trace["position"][:t_len], gt_pos, exists)
    n_obj = gt_pos.shape[1]
    errors = np.full((t_len, n_obj), np.nan)
    for k, o in assign.pairs.items():
        for t in range(assign.locked_at[k], t_len):
            if exists[t, o]:
                errors[t, o] = np.hypot(*(est[t, k] - gt_pos[t, o])) / d
    objs = np.array([o for o in range(n_obj) if gt.kinds[o] in kinds and exists[:, o].any()], int)
    vis = np.asarray(gt.visibility[:t_len], np.float64)
    sel = errors[:, objs] if objs.size else np.zeros((t_len, 0))
    visible = exists[:, objs] & (vis[:, objs] > 0)
    hidden = exists[:, objs] & (vis[:, objs] == 0)
    final = np.full(objs.size, np.nan)
    for j, o in enumerate(objs):
        last = np.nonzero(exists[:, o])[0][-1]
        final[j] = errors[last, o]
    success = np.isfinite(final) & (final < SUCCESS_THRESHOLD)
    return TrackingSummary(errors, assign, _nanmean(sel[visible]), _nanmean(sel[hidden]), final, success, objs)


@dataclass
class MotaCounts:
    fn: int = 0
    fp: int = 0
    ids: int = 0
    gt: int = 0

    def __add__(self, other):
        return MotaCounts(self.fn + other.fn, self.fp + other.fp, self.ids + other.ids, self.gt + other.gt)

    @property
    def mota(self) -> float:
        if self.gt == 0:
            return float("nan")
        return 1.0 - (self.fn + self.fp + self.ids) / self.gt


def match_frame(hyp: np.ndarray, gt: np.ndarray, cutoff: float) -> list[tuple[int, int]]:
    """Maximum-cardinality, minimum-distance one-to-one matching within ``cutoff``; returns (hyp, gt) pairs."""
    if len(hyp) == 0 or len(gt) == 0:
        return []
    dist = np.hypot(*(hyp[:, None, :] - gt[None, :, :]).transpose(2, 0, 1))
    cost = np.where(dist <= cutoff, dist, _FORBIDDEN)
    rows, cols = linear_sum_assignment(cost)
    return [(int(r), int(c)) for r, c in zip(rows, cols) if dist[r, c] <= cutoff]


def mota_counts(hyp_positions, hyp_valid, gt_positions, gt_exists, cutoff: float) -> MotaCounts:
    """CLEAR-MOT style counts for one episode.

    ``hyp_positions`` (T, K, 2), ``hyp_valid`` (T, K), ``gt_positions`` (T, O, 2),
    ``gt_exists`` (T, O).  An identity switch is counted when a ground-truth
    object is matched to a different slot than at its previous match.
    """
    counts = MotaCounts()
    last = {}
    for t in range(gt_positions.shape[0]):
        hs = np.nonzero(hyp_valid[t])[0]
        gs = np.nonzero(gt_exists[t])[0]
        pairs = match_frame(np.asarray(hyp_positions[t][hs], float), np.asarray(gt_positions[t][gs], float), cutoff)
        counts.gt += len(gs)
        counts.fn += len(gs) - len(pairs)
        counts.fp += len(hs) - len(pairs)
        for hi, gi in pairs:
            slot, obj = int(hs[hi]), int(gs[gi])
            if obj in last and last[obj] != slot:
                counts.ids += 1
            last[obj] = slot
    return counts


def detections(trace: EpisodeTrace, threshold: float | None = None) -> np.ndarray:
    """Slots that count as detections: occupied, inside the image and with enough object-mask mass."""
    h, w = trace.height, trace.width
    threshold = mass_threshold(h, w) if threshold is None else threshold
    pos = trace["position"]
    inside = (pos[..., 0] >= -0.5) & (pos[..., 0] <= w - 0.5) & (pos[..., 1] >= -0.5) & (pos[..., 1] <= h - 0.5)
    return trace["occupied"].astype(bool) & inside & (trace["object_mass"] > threshold)


def mota(traces, gts, cutoff: float | None = None, existence_threshold: float | None = None):
    """Aggregate MOTA over episodes; ``cutoff`` defaults to 10% of the image diagonal."""
    total = MotaCounts()
    for trace, gt in zip(traces, gts):
        c = cutoff if cutoff is not None else 0.1 * diagonal(trace.height, trace.width)
        t_len = min(trace.length, gt.positions.shape[0])
        valid = detections(trace, existence_threshold)[:t_len]
        total = total + mota_counts(trace["position"][:t_len], valid, gt.positions[:t_len],
                                    gt.existence[:t_len].astype(bool), c)
    return total.mota, total


@dataclass
class GateStats:
    visible: float  # mean inner-loop integration (1 - alpha) where the object is visible
    occluded: float
    count_visible: int
    count_occluded: int


def gate_stats(alpha, visibility) -> GateStats:
    """Inner-loop integration ``mean(1 - alpha)`` split by ground-truth visibility (0 vs > 0)."""
    alpha = np.ravel(np.asarray(alpha, np.float64))
    vis = np.ravel(np.asarray(visibility, np.float64))
    keep = np.isfinite(alpha) & np.isfinite(vis)
    alpha, vis = alpha[keep], vis[keep]
    occ = vis == 0
    vis_part = 1.0 - alpha[~occ]
    occ_part = 1.0 - alpha[occ]
    return GateStats(float(vis_part.mean()) if vis_part.size else float("nan"),
                     float(occ_part.mean()) if occ_part.size else float("nan"), int(vis_part.size), int(occ_part.size))


def trace_gate_samples(trace: EpisodeTrace, gt: Episode, assignment: Assignment):
    """Gather (alpha, visibility) pairs for every locked slot-frame, alpha = mean of both gates."""
    alphas, vis = [], []
    t_len = min(trace.length, gt.visibility.shape[0])
    for k, o in assignment.pairs.items():
        for t in range(assignment.locked_at[k], t_len):
            if gt.existence[t, o]:
                alphas.append(0.5 * (trace["alpha_g"][t, k] + trace["alpha_p"][t, k]))
                vis.append(gt.visibility[t, o])
    return np.asarray(alphas), np.asarray(vis)


def window_max_slot_error(trace: EpisodeTrace, start: int, end: int) -> float:
    """Largest slot error over predictions of frames ``start..end`` (inclusive); NaN if none defined."""
    lo, hi = max(start - 1, 0), min(end - 1, trace.length - 1)
    if hi < lo:
        return float("nan")
    block = np.asarray(trace["slot_error"][lo:hi + 1], np.float64)
    block = block[np.isfinite(block)]
    return float(block.max()) if block.size else float("nan")


@dataclass
class VoeSummary:
    control: np.ndarray
    surprise: np.ndarray

    @property
    def difference(self) -> float:
        return _nanmean(self.surprise) - _nanmean(self.control)

    @property
    def effect_size(self) -> float:
        """Cohen's d with pooled standard deviation."""
        a = self.control[np.isfinite(self.control)]
        b = self.surprise[np.isfinite(self.surprise)]
        if a.size < 2 or b.size < 2:
            return float("nan")
        pooled = np.sqrt(((a.size - 1) * a.var(ddof=1) + (b.size - 1) * b.var(ddof=1)) / (a.size + b.size - 2))
        return float((b.mean() - a.mean()) / pooled) if pooled > 0 else float("nan")
