"""Main processing loop: encode, reconstruct, gate, transition, predict, recruit."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from loci import autodiff as ad
from loci import scene
from loci.autodiff import Tensor
from loci.errors import ContractError, LifecycleError, ShapeError
from loci.gate import OPEN, GateDecision, ablation_policy, blend
from loci.model import Model
from loci.training import losses as L

log = logging.getLogger(__name__)

OCCUPANCY_THRESHOLD = 0.8
RECRUIT_DELAY = 2
PLACEMENT_PERIOD = 2


@dataclass
class StepFlags:
    training: bool = False
    teacher_forcing: bool = False
    update_enabled: bool = True
    beta: float = 1.0
    error_dropout: float = 0.0


@dataclass
class LoopState:
    """Everything carried from one frame to the next for a batch of episodes.

    Latent codes are tensors (gradients flow through them inside a truncation
    window); pixel-space feedback is stored as plain arrays.
    """

    background: np.ndarray  # (B, 3, H, W)
    gestalt: Tensor  # predicted Gestalt logits for the current frame (B, K, D)
    position: Tensor  # predicted position codes (B, K, 4)
    prev_position: Tensor  # blended position codes of the previous frame
    hidden: Tensor  # (B, K, 2, D_h)
    slot_rgb: np.ndarray  # (B, K, 3, H, W)
    visibility: np.ndarray  # (B, K, H, W)
    objects: np.ndarray
    complement: np.ndarray
    bg_mask: np.ndarray  # (B, H, W)
    gaussians: np.ndarray  # (B, K, H, W)
    logits: np.ndarray  # (B, K, H, W)
    prediction: np.ndarray  # (B, 3, H, W)
    occlusion: np.ndarray  # (B, K), from the prediction masks
    occupied: np.ndarray  # (B, K) bool
    seeker: np.ndarray  # (B,) index of the slot seeking an object, -1 when none
    delay: np.ndarray  # (B,) timesteps left before the next seeker activates
    recruiting: bool = True
    t: int = 0
    exhausted: np.ndarray = field(default=None)

    @property
    def batch(self) -> int:
        return self.background.shape[0]

    def seeking(self) -> np.ndarray:
        out = np.zeros(self.occupied.shape, dtype=bool)
        rows = np.nonzero(self.seeker >= 0)[0]
        out[rows, self.seeker[rows]] = True
        return out

    def active(self) -> np.ndarray:
        if not self.recruiting:
            return np.ones(self.occupied.shape, dtype=bool)
        return self.occupied | self.seeking()

    def detach(self) -> "LoopState":
        """Cut the gradient history of the latent codes (truncation boundary)."""
        return replace(self, gestalt=ad.detach(self.gestalt), position=ad.detach(self.position),
                       prev_position=ad.detach(self.prev_position), hidden=ad.detach(self.hidden))


@dataclass
class StepResult:
    prediction: Tensor  # (B, 3, H, W), prediction of the next frame
    state: LoopState
    losses: L.LossReport | None
    record: dict


def init_state(model: Model, background, recruiting: bool = True) -> LoopState:
    bg = np.asarray(background, dtype=ad.default_dtype())
    a = model.arch
    if bg.ndim == 3:
        bg = bg[None]
    if bg.shape[1:] != (3, a.height, a.width):
        raise ShapeError(f"background {bg.shape} does not match model resolution {a.height}x{a.width}")
    b, k = bg.shape[0], a.num_slots
    g0, p0, h0 = model.initial_codes(b)
    zeros = np.zeros((b, k, a.height, a.width), bg.dtype)
    occupied = np.zeros((b, k), bool)
    seeker = np.zeros(b, int) if recruiting else np.full(b, -1)
    state = LoopState(
        background=bg, gestalt=ad.tensor(g0), position=ad.tensor(p0), prev_position=ad.tensor(p0.copy()),
        hidden=ad.tensor(h0), slot_rgb=np.zeros((b, k, 3, a.height, a.width), bg.dtype), visibility=zeros,
        objects=zeros.copy(), complement=zeros.copy(), bg_mask=np.ones((b, a.height, a.width), bg.dtype),
        gaussians=zeros.copy(), logits=np.full(zeros.shape, scene.EXCLUDED_LOGIT, bg.dtype), prediction=bg.copy(),
        occlusion=np.ones((b, k), bg.dtype), occupied=occupied, seeker=seeker, delay=np.zeros(b, int),
        recruiting=recruiting, t=0, exhausted=np.zeros(b, bool))
    act = state.active()
    state.gaussians = model.position_maps(p0) * act[..., None, None]
    return state


def _advance_recruiting(state: LoopState):
    """Count down the recruiting delay and activate the next free slot when it expires."""
    if not state.recruiting:
        return
    for b in range(state.batch):
        if state.seeker[b] >= 0 or state.delay[b] <= 0:
            continue
        state.delay[b] -= 1
        if state.delay[b] > 0:
            continue
        free = np.nonzero(~state.occupied[b])[0]
        if free.size:
            state.seeker[b] = free[0]
        elif not state.exhausted[b]:
            state.exhausted[b] = True
            log.info("episode %d: all %d slots occupied, recruiting disabled", b, state.occupied.shape[1])


def _gaussian_at(model: Model, row: int, col: int) -> np.ndarray:
    a = model.arch
    mu = scene.to_normalized(np.array([col, row], float), a.height, a.width)
    return model.position_maps(np.array([mu[0], mu[1], a.sigma_init, 0.0]))


def recruit(model: Model, state: LoopState, error: np.ndarray, blackout: np.ndarray) -> np.ndarray:
    """Re-centre the seeking slot's Gaussian on the largest background-masked error.

    Runs every second frame; returns the (possibly updated) Gaussian maps.
    """
    gauss = state.gaussians.copy()
    if not state.recruiting or state.t % PLACEMENT_PERIOD:
        return gauss
    for b in range(state.batch):
        s = state.seeker[b]
        if s < 0 or blackout[b]:
            continue
        score = state.bg_mask[b] * error[b, 0]
        if score.max() <= 0:
            continue
        row, col = np.unravel_index(int(np.argmax(score)), score.shape)
        gauss[b, s] = _gaussian_at(model, row, col)
    return gauss


def scatter_slots(model: Model, state: LoopState, error: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Place every slot's Gaussian at a random pixel among the largest foreground errors."""
    gauss = state.gaussians.copy()
    if state.t % PLACEMENT_PERIOD:
        return gauss
    for b in range(state.batch):
        score = (state.bg_mask[b] * error[b, 0]).ravel().astype(np.float64)
        if score.max() <= 0:
            continue
        score = np.where(score >= 0.5 * score.max(), score, 0.0)
        picks = rng.choice(score.size, size=gauss.shape[1], p=score / score.sum())
        for k, idx in enumerate(picks):
            row, col = np.unravel_index(int(idx), error.shape[-2:])
            gauss[b, k] = _gaussian_at(model, row, col)
    return gauss


def _encoder_inputs(image, error, state: LoopState, gauss) -> np.ndarray:
    b, k = state.occupied.shape
    h, w = image.shape[-2:]

    def per_slot(x, c):
        return np.broadcast_to(x.reshape(b, 1, c, h, w), (b, k, c, h, w))

    return np.concatenate([
        per_slot(image, 3), per_slot(error, 1), state.slot_rgb, state.visibility[:, :, None], state.objects[:, :, None],
        state.complement[:, :, None], gauss[:, :, None], per_slot(state.bg_mask, 1)], axis=2).astype(image.dtype)


def _as_blackout(blackout, b) -> np.ndarray:
    if blackout is None:
        return np.zeros(b, bool)
    return np.broadcast_to(np.asarray(blackout, dtype=bool), (b,)).copy()


def step(model: Model, state: LoopState | None, frame, flags: StepFlags | None = None, *, target=None,
         weights: L.LossWeights | None = None, rng: np.random.Generator | None = None,
         gates: GateDecision | None = None, blackout=None) -> StepResult:
    """Process one frame and predict the next one.

    ``frame`` is ``(B, 3, H, W)`` or ``None`` for a blackout of the whole batch.
    ``target`` (the next frame, or the current one during teacher forcing)
    enables loss computation.  ``gates`` forces the percept gate openings.
    """
    if state is None:
        raise LifecycleError("step called before init_state")
    flags = flags or StepFlags()
    weights = weights or L.LossWeights()
    if flags.training and rng is None:
        raise ContractError("training steps need a random generator")
    a = model.arch
    b, k = state.occupied.shape
    dt = state.background.dtype
    noise_rng = rng if flags.training else None

    state = replace(state, seeker=state.seeker.copy(), delay=state.delay.copy(), exhausted=state.exhausted.copy())
    _advance_recruiting(state)
    act = state.active()
    seeking = state.seeking() if state.recruiting else np.zeros((b, k), bool)

    if frame is None:
        frame = np.zeros_like(state.background)
        blackout = np.ones(b, bool)
    frame = np.asarray(frame, dtype=dt)
    if frame.shape != state.background.shape:
        raise ShapeError(f"frame {frame.shape} does not match background {state.background.shape}")
    blackout = _as_blackout(blackout, b)

    # pre-processing
    error = scene.error_map(frame, state.background, state.prediction)
    if state.recruiting:
        gauss = recruit(model, state, error, blackout)
    elif flags.teacher_forcing and rng is not None:
        gauss = scatter_slots(model, state, error, rng)
    else:
        gauss = state.gaussians
    dark = blackout[:, None, None, None]
    image_in = np.where(dark, 0.0, frame).astype(dt)
    error_in = np.where(dark, 0.0, error).astype(dt)
    if flags.training and flags.error_dropout > 0:
        keep = rng.random(error_in.shape) >= flags.error_dropout
        error_in = (error_in * keep / (1.0 - flags.error_dropout)).astype(dt)

    # slot-wise encoder
    g_obs, p_obs = model.encoder(_encoder_inputs(image_in, error_in, state, gauss))

    # reconstruction decode
    rgb_r, logits_r = model.decoder(scene.binarize_gestalt(g_obs, flags.training, noise_rng), p_obs, active=act,
                                    rng=noise_rng)
    masks_r = scene.postprocess_masks(logits_r, a.bg_offset, active=act)
    occ_obs = scene.occlusion_state(masks_r.visibility, masks_r.object, a.occlusion_threshold)
    recon = scene.compose(rgb_r, state.background, masks_r.with_background())

    # update module
    decision = None
    if flags.teacher_forcing or not flags.update_enabled:
        g_cur, p_cur = g_obs, p_obs
        alpha_g = alpha_p = ad.tensor(np.full((b, k), OPEN, dt))
    else:
        if gates is not None:
            dec = gates
        else:
            dec = ablation_policy(model.mode, occ_obs)
            if dec is None:
                dec = model.controller(
                    (ad.sigmoid(g_obs), p_obs, occ_obs), (ad.sigmoid(state.gestalt), state.position, state.occlusion),
                    state.prev_position, training=flags.training, rng=noise_rng)
                decision = dec
            bypass = np.broadcast_to(seeking | ~act, (b, k))
            if bypass.any():
                dec = GateDecision(ad.where(bypass, OPEN, dec.alpha_g), ad.where(bypass, OPEN, dec.alpha_p), dec.preacts)
        alpha_g, alpha_p = ad.as_tensor(dec.alpha_g), ad.as_tensor(dec.alpha_p)
        g_cur, p_cur = blend((g_obs, p_obs), (state.gestalt, state.position), dec)

    # transition
    cell_pre = None
    if flags.teacher_forcing:
        g_next, p_next, h_next = g_cur, p_cur, state.hidden
    else:
        g_next, p_next, h_next, cell_pre = model.transition(g_cur, p_cur, alpha_g, alpha_p, state.hidden, active=act)
    g0, p0, h0 = model.initial_codes(b)
    g_next = ad.where(act[..., None], g_next, g0)
    p_next = ad.where(act[..., None], p_next, p0)
    h_next = ad.where(act[..., None, None], h_next, h0)

    # prediction decode
    rgb_p, logits_p = model.decoder(scene.binarize_gestalt(g_next, flags.training, noise_rng), p_next, active=act,
                                    rng=noise_rng)
    masks_p = scene.postprocess_masks(logits_p, a.bg_offset, active=act)
    occ_pred = scene.occlusion_state(masks_p.visibility, masks_p.object, a.occlusion_threshold)
    prediction = scene.compose(rgb_p, state.background, masks_p.with_background())

    report = None
    if target is not None:
        report = _losses(model, state, frame, target, blackout, prediction, recon, g_cur, g_next, p_cur, p_next,
                         decision, alpha_g, alpha_p, cell_pre, act, seeking, flags, weights)

    # occupancy
    occupied, seeker, delay = state.occupied.copy(), state.seeker.copy(), state.delay.copy()
    if state.recruiting:
        for row in range(b):
            s = seeker[row]
            if s < 0:
                continue
            hit = (masks_r.visibility.data[row, s] > OCCUPANCY_THRESHOLD) & (masks_p.visibility.data[row, s] > OCCUPANCY_THRESHOLD)
            if hit.any():
                occupied[row, s] = True
                seeker[row] = -1
                delay[row] = RECRUIT_DELAY

    vis_p = masks_p.visibility.data
    new_state = replace(
        state, gestalt=g_next, position=p_next, prev_position=p_cur, hidden=h_next,
        slot_rgb=rgb_p.data.copy(), visibility=vis_p.copy(), objects=masks_p.object.data * act[..., None, None],
        complement=masks_p.complement.data.copy(), bg_mask=masks_p.background.data.copy(),
        gaussians=model.position_maps(p_next.data) * act[..., None, None], logits=masks_p.logits.data.copy(),
        prediction=prediction.data.copy(), occlusion=occ_pred, occupied=occupied, seeker=seeker, delay=delay,
        t=state.t + 1, exhausted=state.exhausted.copy())
    record = {
        "position": p_next.data.copy(),
        "blended_position": p_cur.data.copy(),
        "alpha_g": alpha_g.data.copy(),
        "alpha_p": alpha_p.data.copy(),
        "occlusion": np.asarray(occ_obs).copy(),
        "occlusion_pred": np.asarray(occ_pred).copy(),
        "object_mass": new_state.objects.sum(axis=(-2, -1)),
        "visibility": vis_p.copy(),
        "objects": new_state.objects.copy(),
        "prediction": new_state.prediction.copy(),
        "occupied": occupied.copy(),
        "active": act.copy(),
        "blackout": blackout.copy(),
    }
    return StepResult(prediction, new_state, report, record)


def _losses(model, state, frame, target, blackout, prediction, recon, g_cur, g_next, p_cur, p_next, decision,
            alpha_g, alpha_p, cell_pre, act, seeking, flags, weights) -> L.LossReport:
    target = np.asarray(target, dtype=state.background.dtype)
    fg_next = L.foreground_mask(target, state.background)
    terms = {"prediction_bce": L.bce(L.background_blend(prediction, fg_next, flags.beta),
                                     L.background_blend(target, fg_next, flags.beta))}
    seen = np.nonzero(~blackout)[0]
    if seen.size and weights.reconstruction:
        fg_now = L.foreground_mask(frame, state.background)[seen]
        rec = recon if seen.size == len(blackout) else recon[seen]
        terms["reconstruction_bce"] = L.bce(L.background_blend(rec, fg_now, flags.beta),
                                            L.background_blend(frame[seen], fg_now, flags.beta))
    if not flags.teacher_forcing:
        bound = act & ~seeking
        if weights.gestalt_change:
            b, k = act.shape
            both = model.decode_centered(ad.concat([g_cur, g_next], axis=0))
            terms["gestalt_change"] = L.gestalt_change(both[:b], both[b:], bound)
        if weights.position_change:
            terms["position_change"] = L.position_change(p_cur, p_next, bound)
        if decision is not None and weights.gate_l0:
            opened = ad.heaviside(alpha_g) + ad.heaviside(alpha_p)
            terms["gate_l0"] = ad.sum(opened * bound.astype(opened.dtype)) * (1.0 / act.shape[0])
        if cell_pre is not None and weights.gatel0rd:
            terms["gatel0rd_reg"] = L.l0_count(cell_pre, act)
    return L.combine(terms, weights)


def imagination_compose(model: Model, state: LoopState, exclude=()) -> np.ndarray:
    """Re-compose the last prediction with the given slots removed from the mask competition."""
    act = state.active().copy()
    for s in exclude:
        if not 0 <= s < act.shape[1]:
            raise ContractError(f"slot {s} out of range")
        act[:, s] = False
    with ad.no_grad():
        masks = scene.postprocess_masks(state.logits, model.arch.bg_offset, active=act)
        out = scene.compose(state.slot_rgb, state.background, masks.with_background())
    return out.data
