"""Versioned binary checkpoints.

Layout (little-endian)::

    b"TEAW"  u32 version
    32 bytes  sha256 of the spec's canonical JSON
    32 bytes  sha256 of everything that follows
    u32 len + spec JSON
    u32 len + metadata JSON
    u32 count, then per entry: u32 len + name, u32 ndim, u32 dims..., float32 data
"""
from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import BadMagicError, DigestMismatchError, TruncatedPayloadError, VersionMismatchError
from .net import Network, NetworkSpec

MAGIC = b"TEAW"
VERSION = 1
_U32 = struct.Struct("<I")


def _blob(data: bytes) -> bytes:
    return _U32.pack(len(data)) + data


def encode_checkpoint(net: Network, meta: Optional[dict] = None) -> bytes:
    parts = [_blob(net.spec.to_json().encode()),
             _blob(json.dumps(meta or {}, sort_keys=True).encode())]
    state = net.state()
    parts.append(_U32.pack(len(state)))
    for name in sorted(state):
        arr = np.ascontiguousarray(state[name], dtype="<f4")
        parts.append(_blob(name.encode()))
        parts.append(_U32.pack(arr.ndim) + b"".join(_U32.pack(d) for d in arr.shape))
        parts.append(arr.tobytes())
    payload = b"".join(parts)
    return MAGIC + _U32.pack(VERSION) + net.spec.digest() + hashlib.sha256(payload).digest() + payload


def save_checkpoint(path, net: Network, meta: Optional[dict] = None) -> Path:
    path = Path(path)
    path.write_bytes(encode_checkpoint(net, meta))
    return path


class _Reader:
    def __init__(self, buf: bytes, pos: int):
        self.buf, self.pos = buf, pos

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise TruncatedPayloadError(f"checkpoint ends at byte {len(self.buf)}, needed {self.pos + n}")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return _U32.unpack(self.take(4))[0]

    def blob(self) -> bytes:
        return self.take(self.u32())


def decode_checkpoint(buf: bytes, spec: Optional[NetworkSpec] = None) -> tuple:
    """Return ``(spec, state, meta)``; validates magic, version and both digests."""
    if len(buf) < 4 or buf[:4] != MAGIC:
        raise BadMagicError("not a checkpoint file (bad magic)")
    r = _Reader(buf, 4)
    version = r.u32()
    if version != VERSION:
        raise VersionMismatchError(f"checkpoint version {version}, expected {VERSION}")
    spec_digest = r.take(32)
    payload_digest = r.take(32)
    if hashlib.sha256(buf[r.pos:]).digest() != payload_digest:
        raise DigestMismatchError("checkpoint payload does not match its digest")
    try:
        stored = NetworkSpec.from_dict(json.loads(r.blob().decode()))
        meta = json.loads(r.blob().decode())
    except (UnicodeDecodeError, json.JSONDecodeError, TypeError) as exc:
        raise DigestMismatchError(f"checkpoint spec is unreadable: {exc}") from exc
    if stored.digest() != spec_digest:
        raise DigestMismatchError("embedded spec does not match the header digest")
    if spec is not None and spec.digest() != spec_digest:
        raise DigestMismatchError("checkpoint was saved for a different spec")
    state = {}
    for _ in range(r.u32()):
        name = r.blob().decode()
        shape = tuple(r.u32() for _ in range(r.u32()))
        n = int(np.prod(shape, dtype=np.int64))
        state[name] = np.frombuffer(r.take(4 * n), dtype="<f4").reshape(shape).astype(np.float32)
    if r.pos != len(buf):
        raise DigestMismatchError("trailing bytes after the last entry")
    return stored, state, meta


def load_checkpoint(path, spec: Optional[NetworkSpec] = None) -> tuple:
    """Rebuild the saved :class:`Network`; returns ``(net, meta)``."""
    stored, state, meta = decode_checkpoint(Path(path).read_bytes(), spec)
    net = Network(stored)
    net.load_state(state)
    return net, meta
