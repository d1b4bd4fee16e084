"""Versioned little-endian weight checkpoints.

Layout: ``b"DNWT"``, version u16, u32 length + UTF-8 pipeline config text,
u32 layer count, then per layer: kind tag u8, activation tag u8, tap count
u16, taps as i16 triples, out channels u16, row-major f32 weights, f32 bias.
"""
from __future__ import annotations

import struct

import numpy as np

from .tensor import ACTIVATIONS, KINDS, LayerSpec

MAGIC = b"DNWT"
VERSION = 1


class CheckpointError(ValueError):
    pass


def dump_layers(layers, config_text: str = "") -> bytes:
    cfg = config_text.encode("utf-8")
    parts = [MAGIC, struct.pack("<HI", VERSION, len(cfg)), cfg, struct.pack("<I", len(layers))]
    for l in layers:
        parts.append(struct.pack("<BBH", KINDS.index(l.kind), ACTIVATIONS.index(l.activation), len(l.in_taps)))
        parts.append(np.asarray(l.in_taps, dtype="<i2").tobytes())
        parts.append(struct.pack("<H", l.out_channels))
        parts.append(np.asarray(l.weights, dtype="<f4").tobytes())
        parts.append(np.asarray(l.bias, dtype="<f4").tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, blob):
        self.blob = blob
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.blob):
            raise CheckpointError(f"truncated checkpoint at byte {self.pos}")
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        s = struct.Struct(fmt)
        return s.unpack(self.take(s.size))


def load_layers(blob: bytes):
    """Return (layers, config_text)."""
    r = _Reader(blob)
    if r.take(4) != MAGIC:
        raise CheckpointError("bad magic: not a DNWT checkpoint")
    version, clen = r.unpack("<HI")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    config_text = r.take(clen).decode("utf-8")
    (n,) = r.unpack("<I")
    layers = []
    for _ in range(n):
        kind, act, ntaps = r.unpack("<BBH")
        if kind >= len(KINDS) or act >= len(ACTIVATIONS):
            raise CheckpointError("unknown layer kind or activation tag")
        taps = np.frombuffer(r.take(6 * ntaps), dtype="<i2").reshape(ntaps, 3)
        (out,) = r.unpack("<H")
        w = np.frombuffer(r.take(4 * out * ntaps), dtype="<f4").reshape(out, ntaps).astype(np.float32)
        b = np.frombuffer(r.take(4 * out), dtype="<f4").astype(np.float32)
        try:
            layers.append(LayerSpec(KINDS[kind], [tuple(int(v) for v in t) for t in taps], w, b, ACTIVATIONS[act]))
        except ValueError as e:
            raise CheckpointError(f"invalid layer in checkpoint: {e}") from None
    if r.pos != len(blob):
        raise CheckpointError("trailing bytes after last layer")
    return layers, config_text


def save_checkpoint(path, layers, config_text: str = ""):
    with open(path, "wb") as f:
        f.write(dump_layers(layers, config_text))


def load_checkpoint(path):
    with open(path, "rb") as f:
        return load_layers(f.read())
