"""Binary dataset container.

All integers and reals are little-endian.  Layout, in order::

    magic      4 bytes  b"LOCI"
    version    u16      (currently 1)
    header     6 x u32  N, T, H, W, C, K_max
    frames     f32      N*T*H*W*C      channels last, values in [0, 1]
    positions  f32      N*T*K_max*2    pixel (x, y) of each object centre, NaN when absent
    existence  u8       N*T*K_max
    masks      u8       N*T*H*W        instance ids, 0 = background, object k has id k+1
    background f32      N*H*W*C
    -- extension block (present from version 1) --
    visibility f32      N*T*K_max      visible fraction of each object's silhouette
    kinds      u8       N*K_max        0 unused, 1 moving object, 2 occluder
    windows    u32      N*4            reappearance start/end, screen-fall start/end frames
    scenarios  u8       N              scenario code (index into SCENARIOS)

The file ends exactly after the last field.
"""
from __future__ import annotations

import struct

import numpy as np

from loci.datagen.episode import Dataset
from loci.errors import FormatError

MAGIC = b"LOCI"
VERSION = 1
_HEADER = struct.Struct("<4sH6I")


def encode(ds: Dataset) -> bytes:
    n, t, h, w, c, k = ds.shape
    parts = [
        _HEADER.pack(MAGIC, VERSION, n, t, h, w, c, k),
        np.ascontiguousarray(ds.frames.transpose(0, 1, 3, 4, 2), "<f4").tobytes(),
        np.ascontiguousarray(ds.positions, "<f4").tobytes(),
        np.ascontiguousarray(ds.existence, "u1").tobytes(),
        np.ascontiguousarray(ds.masks, "u1").tobytes(),
        np.ascontiguousarray(ds.backgrounds.transpose(0, 2, 3, 1), "<f4").tobytes(),
        np.ascontiguousarray(ds.visibility, "<f4").tobytes(),
        np.ascontiguousarray(ds.kinds, "u1").tobytes(),
        np.ascontiguousarray(ds.windows, "<u4").tobytes(),
        np.ascontiguousarray(ds.scenarios, "u1").tobytes(),
    ]
    return b"".join(parts)


def decode(blob: bytes) -> Dataset:
    if len(blob) < _HEADER.size:
        raise FormatError("dataset: truncated header")
    magic, version, n, t, h, w, c, k = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise FormatError(f"dataset: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"dataset: unsupported version {version}")
    fields = [
        ("frames", "<f4", (n, t, h, w, c)),
        ("positions", "<f4", (n, t, k, 2)),
        ("existence", "u1", (n, t, k)),
        ("masks", "u1", (n, t, h, w)),
        ("backgrounds", "<f4", (n, h, w, c)),
        ("visibility", "<f4", (n, t, k)),
        ("kinds", "u1", (n, k)),
        ("windows", "<u4", (n, 4)),
        ("scenarios", "u1", (n,)),
    ]
    need = _HEADER.size + sum(np.dtype(dt).itemsize * int(np.prod(shape)) for _, dt, shape in fields)
    if len(blob) != need:
        raise FormatError(f"dataset: expected {need} bytes for header {(n, t, h, w, c, k)}, got {len(blob)}")
    off, out = _HEADER.size, {}
    for name, dt, shape in fields:
        count = int(np.prod(shape))
        out[name] = np.frombuffer(blob, dtype=dt, count=count, offset=off).reshape(shape)
        off += count * np.dtype(dt).itemsize
    return Dataset(
        frames=out["frames"].transpose(0, 1, 4, 2, 3).astype(np.float32),
        positions=out["positions"].astype(np.float32),
        existence=out["existence"].copy(),
        masks=out["masks"].copy(),
        backgrounds=out["backgrounds"].transpose(0, 3, 1, 2).astype(np.float32),
        visibility=out["visibility"].astype(np.float32),
        kinds=out["kinds"].copy(),
        windows=out["windows"].astype(np.uint32),
        scenarios=out["scenarios"].copy(),
    )


def save(path, ds: Dataset):
    with open(path, "wb") as fh:
        fh.write(encode(ds))


def load(path) -> Dataset:
    with open(path, "rb") as fh:
        return decode(fh.read())
