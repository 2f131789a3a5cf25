"""Per-episode evaluation traces: one record per processed frame.

Binary layout (little-endian)::

    magic    4 bytes  b"LTRC"
    version  u16      (currently 1)
    header   7 x u32  T, K, H, W, mask_h, mask_w, reserved (0)
    records  T x record_dtype(K, H, W, mask_h, mask_w)

Each record holds, for frame ``t``: the blackout flag, blended slot
positions for frame ``t`` and predicted positions for frame ``t + 1`` (pixel
``x, y``), both occlusion estimates, both gate openings, occupancy and
activity flags, object-mask mass, the slot error of the prediction of frame
``t + 1`` (NaN when undefined), the slot visibility and object masks
(downsampled to ``mask_h x mask_w`` by block averaging) and the composed
prediction of frame ``t + 1``.
"""
from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass

import numpy as np

from loci.errors import ContractError, FormatError

MAGIC = b"LTRC"
VERSION = 1
_HEADER = struct.Struct("<4sH7I")


def record_dtype(k: int, h: int, w: int, mh: int, mw: int) -> np.dtype:
    f4 = "<f4"
    return np.dtype([
        ("t", "<u4"), ("blackout", "u1"), ("pad", "u1", (3,)),
        ("position", f4, (k, 2)), ("pred_position", f4, (k, 2)), ("sigma", f4, (k,)),
        ("occlusion", f4, (k,)), ("occlusion_pred", f4, (k,)),
        ("alpha_g", f4, (k,)), ("alpha_p", f4, (k,)),
        ("occupied", "u1", (k,)), ("active", "u1", (k,)),
        ("object_mass", f4, (k,)), ("slot_error", f4, (k,)),
        ("visibility", f4, (k, mh, mw)), ("objects", f4, (k, mh, mw)),
        ("prediction", f4, (3, h, w)),
    ])


def downsample(maps: np.ndarray, factor: int) -> np.ndarray:
    if factor == 1:
        return maps
    *lead, h, w = maps.shape
    if h % factor or w % factor:
        raise ContractError(f"mask size {h}x{w} not divisible by {factor}")
    return maps.reshape(*lead, h // factor, factor, w // factor, factor).mean(axis=(-3, -1))


@dataclass
class EpisodeTrace:
    records: np.ndarray  # structured, shape (T,)
    height: int
    width: int

    @property
    def length(self) -> int:
        return len(self.records)

    @property
    def num_slots(self) -> int:
        return self.records.dtype["alpha_g"].shape[0]

    def __getitem__(self, name: str) -> np.ndarray:
        return self.records[name]

    @staticmethod
    def empty(length: int, k: int, h: int, w: int, mask_factor: int = 1) -> "EpisodeTrace":
        rec = np.zeros(length, record_dtype(k, h, w, h // mask_factor, w // mask_factor))
        rec["t"] = np.arange(length)
        rec["slot_error"] = np.nan
        return EpisodeTrace(rec, h, w)

    def encode(self) -> bytes:
        dt = self.records.dtype
        mh, mw = dt["visibility"].shape[1:]
        head = _HEADER.pack(MAGIC, VERSION, self.length, self.num_slots, self.height, self.width, mh, mw, 0)
        return head + self.records.tobytes()

    @staticmethod
    def decode(blob: bytes) -> "EpisodeTrace":
        if len(blob) < _HEADER.size:
            raise FormatError("trace: truncated header")
        magic, version, t, k, h, w, mh, mw, _ = _HEADER.unpack_from(blob)
        if magic != MAGIC:
            raise FormatError(f"trace: bad magic {magic!r}")
        if version != VERSION:
            raise FormatError(f"trace: unsupported version {version}")
        dt = record_dtype(k, h, w, mh, mw)
        if len(blob) != _HEADER.size + t * dt.itemsize:
            raise FormatError(f"trace: expected {t} records of {dt.itemsize} bytes")
        rec = np.frombuffer(blob, dtype=dt, count=t, offset=_HEADER.size).copy()
        return EpisodeTrace(rec, h, w)

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.encode())

    @staticmethod
    def load(path) -> "EpisodeTrace":
        with open(path, "rb") as fh:
            return EpisodeTrace.decode(fh.read())

    CSV_COLUMNS = ("frame", "slot", "error", "alpha_g", "alpha_p", "occlusion", "x", "y", "pred_x", "pred_y",
                   "occupied", "blackout")

    def to_csv(self) -> str:
        buf = io.StringIO()
        out = csv.writer(buf, lineterminator="\n")
        out.writerow(self.CSV_COLUMNS)
        r = self.records
        for t in range(self.length):
            for k in range(self.num_slots):
                out.writerow([int(r["t"][t]), k, f"{r['slot_error'][t, k]:.6g}", f"{r['alpha_g'][t, k]:.6g}",
                              f"{r['alpha_p'][t, k]:.6g}", f"{r['occlusion'][t, k]:.6g}",
                              f"{r['position'][t, k, 0]:.4f}", f"{r['position'][t, k, 1]:.4f}",
                              f"{r['pred_position'][t, k, 0]:.4f}", f"{r['pred_position'][t, k, 1]:.4f}",
                              int(r["occupied"][t, k]), int(r["blackout"][t])])
        return buf.getvalue()
