"""Binary parameter checkpoints.

Layout (little endian): magic ``LCKP``, u16 version, u32 parameter count, then
per parameter a u16 name length, the UTF-8 name, a u8 rank, ``rank`` u32
dimensions and the float32 values in row-major order.  Model metadata is
stored as an extra rank-1 entry named ``meta.json`` holding the UTF-8 bytes of
a JSON document, one byte per float32 value.
"""
from __future__ import annotations

import json
import struct

import numpy as np

from loci.errors import FormatError

MAGIC = b"LCKP"
VERSION = 1
META_NAME = "meta.json"


def encode(params: dict[str, np.ndarray], meta: dict | None = None) -> bytes:
    entries = dict(params)
    if meta is not None:
        entries[META_NAME] = np.frombuffer(json.dumps(meta, sort_keys=True).encode(), np.uint8).astype(np.float32)
    out = [MAGIC, struct.pack("<HI", VERSION, len(entries))]
    for name, value in entries.items():
        raw = name.encode("utf-8")
        arr = np.ascontiguousarray(value, dtype="<f4")
        out.append(struct.pack("<H", len(raw)) + raw + struct.pack("<B", arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(arr.tobytes())
    return b"".join(out)


def decode(blob: bytes) -> tuple[dict[str, np.ndarray], dict]:
    if blob[:4] != MAGIC:
        raise FormatError("not a checkpoint file (bad magic)")
    try:
        version, count = struct.unpack_from("<HI", blob, 4)
        if version != VERSION:
            raise FormatError(f"unsupported checkpoint version {version}")
        off = 10
        params = {}
        for _ in range(count):
            (n,) = struct.unpack_from("<H", blob, off)
            off += 2
            name = blob[off:off + n].decode("utf-8")
            off += n
            (rank,) = struct.unpack_from("<B", blob, off)
            off += 1
            dims = struct.unpack_from(f"<{rank}I", blob, off)
            off += 4 * rank
            size = int(np.prod(dims)) if rank else 1
            arr = np.frombuffer(blob, "<f4", count=size, offset=off).reshape(dims).astype(np.float32)
            off += 4 * size
            params[name] = arr
    except (struct.error, ValueError, UnicodeDecodeError) as exc:
        raise FormatError(f"truncated or corrupt checkpoint: {exc}") from None
    if off != len(blob):
        raise FormatError("trailing bytes after checkpoint payload")
    meta = {}
    if META_NAME in params:
        meta = json.loads(bytes(params.pop(META_NAME).astype(np.uint8)).decode("utf-8"))
    return params, meta


def save(path, model, extra: dict | None = None):
    meta = model.meta()
    meta.update(extra or {})
    with open(path, "wb") as fh:
        fh.write(encode(model.params.state(), meta))


def load(path):
    """Rebuild a model from a checkpoint file; returns ``(model, meta)``."""
    from loci.model import Model

    with open(path, "rb") as fh:
        params, meta = decode(fh.read())
    if "arch" not in meta:
        raise FormatError("checkpoint lacks model metadata")
    model = Model(Model.arch_from_meta(meta), mode=meta.get("mode", "looped"))
    model.params.load_state(params)
    return model, meta
