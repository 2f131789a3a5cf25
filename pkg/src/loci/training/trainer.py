"""Truncated-BPTT training loop with the three-phase curriculum."""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from loci import autodiff as ad
from loci import pipeline
from loci.config import Config, serialize
from loci.datagen.blackout import blackout_schedule
from loci.datagen.episode import Dataset
from loci.errors import ConfigError
from loci.model import Model
from loci.training import checkpoint
from loci.training.curriculum import Curriculum, learning_rate
from loci.training.losses import TERMS, LossReport
from loci.training.optim import RAdam

log = logging.getLogger(__name__)


def streams(seed: int) -> dict[str, np.random.Generator]:
    """Named, independent random streams derived from one seed."""
    init, data, noise, blackout = np.random.SeedSequence(seed).spawn(4)
    return {"init": np.random.default_rng(init), "data": np.random.default_rng(data),
            "noise": np.random.default_rng(noise), "blackout": np.random.default_rng(blackout)}


def check_dataset(cfg: Config, data: Dataset):
    n, t, h, w, c, k = data.shape
    m = cfg.model
    if (h, w) != (m.height, m.width):
        raise ConfigError(f"dataset resolution {h}x{w} does not match model resolution {m.height}x{m.width}")
    if c != 3:
        raise ConfigError(f"dataset has {c} channels, expected 3")
    if k > m.num_slots:
        raise ConfigError(f"dataset has up to {k} objects but the model has only {m.num_slots} slots")
    if t < 2:
        raise ConfigError("dataset episodes need at least 2 frames")


@dataclass
class UpdateLog:
    update: int
    phase: int
    lr: float
    beta: float
    steps: int
    terms: dict = field(default_factory=dict)  # per-step means of the unweighted terms
    total: float = 0.0

    def line(self) -> str:
        parts = [f"update={self.update}", f"phase={self.phase}", f"lr={self.lr:.6g}", f"beta={self.beta:.4g}",
                 f"steps={self.steps}", f"total={self.total:.6g}"]
        parts += [f"{k}={v:.6g}" for k, v in self.terms.items()]
        return " ".join(parts)


class Trainer:
    """Owns the model, optimizer and random streams for one training run.

    Every ``bptt_window`` processed frames the accumulated loss is
    back-propagated; the optimizer steps after ``accumulate`` such windows
    (once ``accumulate_from`` updates have passed), and the latent state is
    cut from the graph only after an optimizer step.
    """

    def __init__(self, cfg: Config, data: Dataset, out_dir=None, mode: str | None = None, model: Model | None = None):
        cfg.validate()
        check_dataset(cfg, data)
        self.cfg, self.data, self.out_dir = cfg, data, out_dir
        self.rngs = streams(cfg.seed)
        init_seed = int(self.rngs["init"].integers(2**31))
        self.model = model or Model(cfg.arch(), mode or cfg.model.mode, seed=init_seed)
        t = cfg.train
        self.optimizer = RAdam(self.model.params.values(), lr=t.lr, betas=(t.beta1, t.beta2), eps=t.eps)
        self.curriculum = Curriculum(t.phase2_start, t.phase3_start)
        self.weights = cfg.weights()
        self.update = 0
        self.history: list[UpdateLog] = []
        self.checkpoints: list[str] = []
        self._log_fh = None
        if out_dir is not None:
            os.makedirs(out_dir, exist_ok=True)
            with open(os.path.join(out_dir, "config.txt"), "w", encoding="utf-8") as fh:
                fh.write(serialize(cfg))
            self._log_fh = open(os.path.join(out_dir, "metrics.log"), "a", encoding="utf-8")

    # -- schedule helpers -------------------------------------------------
    def accumulate(self) -> int:
        t = self.cfg.train
        return t.accumulate if self.update >= t.accumulate_from else 1

    def blackouts(self, batch: int, length: int) -> np.ndarray:
        b = self.cfg.blackout
        if b.policy == "none":
            return np.zeros((batch, length), bool)
        progress = self.update / max(self.cfg.train.updates, 1)
        return np.stack([blackout_schedule(length, b.policy, self.rngs["blackout"], p=b.p, p_start=b.p_start,
                                           p_end=b.p_end, progress=progress, safe_frames=b.safe_frames)
                         for _ in range(batch)])

    def sample(self) -> np.ndarray:
        n, bs = len(self.data), self.cfg.train.batch_size
        return self.rngs["data"].choice(n, size=bs, replace=n < bs)

    # -- main loop --------------------------------------------------------
    def run_sequence(self, idx, callback: Callable | None = None):
        """Train on one batch of whole episodes; returns when the episodes end or the budget is spent."""
        cfg, t = self.cfg, self.cfg.train
        frames = self.data.frames[idx]
        bg = self.data.backgrounds[idx]
        b, length = frames.shape[:2]
        blackout = self.blackouts(b, length)
        state = pipeline.init_state(self.model, bg, recruiting=self.curriculum.recruiting(self.update))
        plan = [(0, 0, True)] * t.teacher_forcing + [(i, i + 1, False) for i in range(length - 1)]
        window: list[LossReport] = []
        pending = 0
        with ad.Tape() as tape:
            for n, (src, dst, tf) in enumerate(plan):
                if self.update >= t.updates:
                    break
                flags = pipeline.StepFlags(training=True, teacher_forcing=tf,
                                           update_enabled=self.curriculum.update_module(self.update),
                                           beta=self.curriculum.beta(self.update), error_dropout=t.error_dropout)
                dark = np.zeros(b, bool) if tf else blackout[:, src]
                res = pipeline.step(self.model, state, frames[:, src], flags, target=frames[:, dst],
                                    weights=self.weights, rng=self.rngs["noise"], blackout=dark)
                state = res.state
                window.append(res.losses)
                if len(window) == t.bptt_window or n == len(plan) - 1:
                    pending += 1
                    final = pending >= self.accumulate()
                    self._backward(window, retain=not final)
                    if final:
                        self._optimizer_step(window)
                        state = state.detach()
                        tape.clear()
                        pending = 0
                        if callback is not None:
                            callback(self)
                    window = []
            if pending:
                self._optimizer_step(window)
        return state

    def _backward(self, window: list[LossReport], retain: bool):
        total = window[0].total_tensor
        for rep in window[1:]:
            total = total + rep.total_tensor
        total.backward(retain_graph=retain)
        self._last_window = window

    def _optimizer_step(self, window):
        window = window or getattr(self, "_last_window", [])
        t = self.cfg.train
        lr = learning_rate(self.update, t.lr, t.lr_decayed, t.lr_decay_step)
        self.optimizer.step(lr)
        self.optimizer.zero_grad()
        entry = UpdateLog(self.update, self.curriculum.phase(self.update), lr, self.curriculum.beta(self.update),
                          len(window))
        for name in TERMS:
            vals = [getattr(r, name) for r in window if getattr(r, name) is not None]
            if vals:
                entry.terms[name] = float(np.mean(vals))
        entry.total = float(np.mean([r.total for r in window])) if window else 0.0
        self.history.append(entry)
        self.update += 1
        if self._log_fh is not None and self.update % max(t.log_every, 1) == 0:
            self._log_fh.write(entry.line() + "\n")
            self._log_fh.flush()
        if self.out_dir is not None and t.checkpoint_every > 0 and self.update % t.checkpoint_every == 0:
            self.save(os.path.join(self.out_dir, f"ckpt_{self.update:06d}.lckp"))

    def save(self, path: str):
        checkpoint.save(path, self.model, {"update": self.update, "config": serialize(self.cfg)})
        self.checkpoints.append(path)

    def train(self, callback: Callable | None = None) -> Model:
        while self.update < self.cfg.train.updates:
            self.run_sequence(self.sample(), callback)
        if self.out_dir is not None:
            self.save(os.path.join(self.out_dir, "final.lckp"))
        self.close()
        return self.model

    def close(self):
        if self._log_fh is not None:
            self._log_fh.close()
            self._log_fh = None


def train(cfg: Config, data: Dataset, out_dir=None, mode: str | None = None, callback=None) -> Trainer:
    trainer = Trainer(cfg, data, out_dir, mode)
    trainer.train(callback)
    return trainer
