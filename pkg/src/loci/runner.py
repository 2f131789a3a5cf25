"""Run a model over whole episodes in evaluation mode and collect traces."""
from __future__ import annotations

import numpy as np

from loci import autodiff as ad
from loci import pipeline, scene
from loci.errors import ContractError, ShapeError
from loci.evaluation.metrics import slot_error
from loci.gate import GateDecision
from loci.model import Model
from loci.trace import EpisodeTrace, downsample


def _check(model: Model, frames: np.ndarray, backgrounds: np.ndarray):
    a = model.arch
    if frames.ndim != 5 or frames.shape[2:] != (3, a.height, a.width):
        raise ShapeError(f"frames {frames.shape} do not match model resolution {a.height}x{a.width}")
    if backgrounds.shape != (frames.shape[0], 3, a.height, a.width):
        raise ShapeError(f"backgrounds {backgrounds.shape} do not match frames {frames.shape}")


def run(model: Model, frames, backgrounds, *, teacher_forcing: int = 0, blackout=None, length: int | None = None,
        gates: GateDecision | None = None, mask_factor: int = 1, recruiting: bool = True,
        update_enabled: bool = True):
    """Process a batch of episodes; frames at or beyond ``frames.shape[1]`` and blacked-out frames are not shown.

    ``frames`` (B, T, 3, H, W), ``backgrounds`` (B, 3, H, W), ``blackout``
    (B, length) bool.  Returns ``(traces, predictions)`` where
    ``predictions[:, t]`` is the composed prediction of frame ``t + 1``.
    """
    frames = np.asarray(frames, dtype=ad.default_dtype())
    backgrounds = np.asarray(backgrounds, dtype=ad.default_dtype())
    _check(model, frames, backgrounds)
    b, t_avail = frames.shape[:2]
    length = t_avail if length is None else length
    if blackout is None:
        blackout = np.zeros((b, length), bool)
    blackout = np.asarray(blackout, bool)
    if blackout.shape != (b, length):
        raise ShapeError(f"blackout {blackout.shape} does not match (batch, length) {(b, length)}")
    a = model.arch
    k = a.num_slots
    traces = [EpisodeTrace.empty(length, k, a.height, a.width, mask_factor) for _ in range(b)]
    preds = np.zeros((b, length, 3, a.height, a.width), frames.dtype)
    flags_tf = pipeline.StepFlags(teacher_forcing=True)
    flags = pipeline.StepFlags(update_enabled=update_enabled)
    with ad.no_grad():
        state = pipeline.init_state(model, backgrounds, recruiting=recruiting)
        if t_avail:
            for _ in range(teacher_forcing):
                state = pipeline.step(model, state, frames[:, 0], flags_tf).state
        for t in range(length):
            dark = blackout[:, t] | (t >= t_avail)
            frame = frames[:, t] if t < t_avail else None
            res = pipeline.step(model, state, frame, flags, gates=gates, blackout=dark)
            state, rec = res.state, res.record
            preds[:, t] = rec["prediction"]
            pos = scene.to_pixels(rec["blended_position"][..., :2], a.height, a.width)
            pred_pos = scene.to_pixels(rec["position"][..., :2], a.height, a.width)
            vis_ds = downsample(rec["visibility"], mask_factor)
            obj_ds = downsample(rec["objects"], mask_factor)
            for i, tr in enumerate(traces):
                r = tr.records[t]
                r["blackout"] = dark[i]
                r["position"], r["pred_position"] = pos[i], pred_pos[i]
                r["sigma"] = rec["blended_position"][i, :, 2]
                r["occlusion"], r["occlusion_pred"] = rec["occlusion"][i], rec["occlusion_pred"][i]
                r["alpha_g"], r["alpha_p"] = rec["alpha_g"][i], rec["alpha_p"][i]
                r["occupied"], r["active"] = rec["occupied"][i], rec["active"][i]
                r["object_mass"] = rec["object_mass"][i]
                r["visibility"], r["objects"] = vis_ds[i], obj_ds[i]
                r["prediction"] = rec["prediction"][i]
                if t + 1 < t_avail:
                    for s in range(k):
                        if rec["active"][i, s]:
                            r["slot_error"][s] = slot_error(frames[i, t + 1], rec["prediction"][i],
                                                            rec["visibility"][i, s])
    return traces, preds


def rollout(model: Model, frames, backgrounds, context: int, horizon: int, **kw):
    """Show the first ``context`` frames, then black out every input for ``horizon`` steps."""
    if context < 1:
        raise ContractError("rollout needs at least one context frame")
    frames = np.asarray(frames)
    if frames.shape[1] < context:
        raise ContractError(f"rollout context {context} exceeds episode length {frames.shape[1]}")
    length = context + horizon
    blackout = np.zeros((frames.shape[0], length), bool)
    blackout[:, context:] = True
    return run(model, frames[:, :length], backgrounds, blackout=blackout, length=length, **kw)
