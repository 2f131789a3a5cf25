"""Run configuration: ``key = value`` text with dotted keys and ``#`` comments."""
from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass, field

from loci.errors import ConfigError
from loci.gate import MODES
from loci.nn.networks import Arch
from loci.training.losses import LossWeights


@dataclass
class ModelSection:
    height: int = 32
    width: int = 32
    num_slots: int = 3
    gestalt_dim: int = 48
    hidden_dim: int = 64
    transition_dim: int = 80
    heads: int = 10
    bg_offset: float = 0.1
    occlusion_threshold: float = 0.8
    mode: str = "looped"


@dataclass
class LossSection:
    prediction: float = 1.0
    reconstruction: float = 0.33
    gestalt_change: float = 0.1
    position_change: float = 0.01
    gate_l0: float = 5e-6
    gatel0rd: float = 1e-10


@dataclass
class TrainSection:
    updates: int = 3000
    batch_size: int = 4
    bptt_window: int = 5
    teacher_forcing: int = 10
    phase2_start: int = 1000
    phase3_start: int = 2000
    lr: float = 1e-4
    lr_decayed: float = 3.3e-5
    lr_decay_step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    error_dropout: float = 0.1
    foreground_threshold: float = 0.01
    accumulate: int = 1
    accumulate_from: int = 0
    checkpoint_every: int = 1000
    log_every: int = 1


@dataclass
class BlackoutSection:
    policy: str = "none"
    p: float = 0.2
    p_start: float = 0.1
    p_end: float = 0.45
    safe_frames: int = 10


@dataclass
class Config:
    seed: int = 0
    workers: int = 1
    model: ModelSection = field(default_factory=ModelSection)
    loss: LossSection = field(default_factory=LossSection)
    train: TrainSection = field(default_factory=TrainSection)
    blackout: BlackoutSection = field(default_factory=BlackoutSection)

    def arch(self) -> Arch:
        m = self.model
        return Arch(height=m.height, width=m.width, num_slots=m.num_slots, gestalt_dim=m.gestalt_dim,
                    hidden_dim=m.hidden_dim, transition_dim=m.transition_dim, heads=m.heads, bg_offset=m.bg_offset,
                    occlusion_threshold=m.occlusion_threshold)

    def weights(self) -> LossWeights:
        return LossWeights(**dataclasses.asdict(self.loss))

    def validate(self) -> "Config":
        m, t, b = self.model, self.train, self.blackout
        if m.mode not in MODES:
            raise ConfigError(f"model.mode: expected one of {', '.join(MODES)}, got {m.mode!r}")
        if m.height % 4 or m.width % 4 or m.height < 8 or m.width < 8:
            raise ConfigError("model.height/model.width: expected multiples of 4, at least 8")
        if m.num_slots < 1:
            raise ConfigError("model.num_slots: expected int >= 1")
        if m.transition_dim % m.heads:
            raise ConfigError("model.transition_dim: must be divisible by model.heads")
        if t.lr <= 0 or t.lr_decayed <= 0:
            raise ConfigError("train.lr: expected float > 0")
        if t.bptt_window < 1 or t.batch_size < 1 or t.accumulate < 1:
            raise ConfigError("train.bptt_window/batch_size/accumulate: expected int >= 1")
        if not 0 <= t.error_dropout < 1:
            raise ConfigError("train.error_dropout: expected float in [0, 1)")
        if t.phase3_start < t.phase2_start:
            raise ConfigError("train.phase3_start: must not precede train.phase2_start")
        if b.policy not in ("none", "fixed_p", "ramp"):
            raise ConfigError(f"blackout.policy: expected none|fixed_p|ramp, got {b.policy!r}")
        for name in ("p", "p_start", "p_end"):
            if not 0 <= getattr(b, name) <= 1:
                raise ConfigError(f"blackout.{name}: expected float in [0, 1]")
        if self.workers < 1:
            raise ConfigError("workers: expected int >= 1")
        return self


def _leaves(obj, prefix=""):
    for f in dataclasses.fields(obj):
        value = getattr(obj, f.name)
        key = f"{prefix}{f.name}"
        if dataclasses.is_dataclass(value):
            yield from _leaves(value, key + ".")
        else:
            yield key, value


def _resolve(cfg: Config, key: str):
    parts = key.split(".")
    obj = cfg
    for part in parts[:-1]:
        sub = getattr(obj, part, None) if part in {f.name for f in dataclasses.fields(obj)} else None
        if not dataclasses.is_dataclass(sub):
            raise ConfigError(f"{key}: unknown key")
        obj = sub
    names = {f.name for f in dataclasses.fields(obj)}
    if parts[-1] not in names or dataclasses.is_dataclass(getattr(obj, parts[-1])):
        raise ConfigError(f"{key}: unknown key")
    return obj, parts[-1], typing.get_type_hints(type(obj))[parts[-1]]


def _coerce(key: str, raw: str, kind):
    raw = raw.strip()
    try:
        if kind is bool:
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        return raw.strip('"')
    except ValueError:
        raise ConfigError(f"{key}: expected {kind.__name__}, got {raw!r}") from None


def set_value(cfg: Config, key: str, raw: str):
    obj, name, kind = _resolve(cfg, key)
    setattr(obj, name, _coerce(key, raw, kind))


def parse(text: str, base: Config | None = None) -> Config:
    cfg = base if base is not None else Config()
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = line.split("=", 1)
        set_value(cfg, key.strip(), value)
    return cfg.validate()


def load(path) -> Config:
    with open(path, encoding="utf-8") as fh:
        return parse(fh.read())


def serialize(cfg: Config) -> str:
    lines = []
    for key, value in _leaves(cfg):
        lines.append(f"{key} = {value!r}" if isinstance(value, float) else f"{key} = {value}")
    return "\n".join(lines) + "\n"


def as_dict(cfg: Config) -> dict:
    return dict(_leaves(cfg))
