"""Lookup-table data model: lattice quantization, exhaustive baking, storage law, file format.

Tables are uniformly subsampled at an interval of 16, i.e. 17 lattice levels
per input dimension.  Entries are stored row-major over lattice coordinates
with the first tap most significant, one row of ``17**dims`` entries per
output slot.
"""
from __future__ import annotations

import itertools
import struct
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .numeric import round_half_away

INTERVAL = 16
LEVELS = 17
MAGIC = b"DNLT"
VERSION = 1
SEMANTIC_TAGS = {"residual": 0, "direct": 1, "feature": 2}
BAKE_BATCH = 4096


class LutFormatError(ValueError):
    """Structured parse failure: ``reason`` is one of bad-magic, bad-version, truncated, invalid."""

    def __init__(self, reason: str, detail: str = ""):
        super().__init__(f"{reason}: {detail}" if detail else reason)
        self.reason = reason
        self.detail = detail


def entry_dtype(semantics: str):
    return np.int8 if semantics == "residual" else np.uint8


def entry_bounds(semantics: str):
    info = np.iinfo(entry_dtype(semantics))
    return int(info.min), int(info.max)


@dataclass
class LutTable:
    id: str
    dims: int
    out_slots: int
    semantics: str
    entries: np.ndarray
    interval: int = INTERVAL
    levels: int = LEVELS

    def __post_init__(self):
        if self.dims not in (3, 4):
            raise ValueError(f"table {self.id}: only 3D and 4D tables are deployable, got {self.dims}D")
        if self.semantics not in SEMANTIC_TAGS:
            raise ValueError(f"table {self.id}: unknown semantics {self.semantics!r}")
        if self.interval * (self.levels - 1) != 256:
            raise ValueError("interval x (levels - 1) must span 256")
        self.entries = np.asarray(self.entries)
        want = (self.out_slots, self.levels ** self.dims)
        if self.entries.shape != want:
            raise ValueError(f"table {self.id}: entries shape {self.entries.shape} != {want}")
        if self.entries.dtype != entry_dtype(self.semantics):
            self.entries = self.entries.astype(entry_dtype(self.semantics))

    @property
    def nbytes(self) -> int:
        return int(self.entries.size * self.entries.itemsize)

    def strides(self) -> np.ndarray:
        return LEVELS ** np.arange(self.dims - 1, -1, -1)

    def entry(self, cell) -> np.ndarray:
        """Entries (one per slot) at a lattice coordinate tuple."""
        return self.entries[:, int(np.dot(cell, self.strides()))]

    def __eq__(self, other):
        if not isinstance(other, LutTable):
            return NotImplemented
        return (self.id, self.dims, self.out_slots, self.semantics, self.interval, self.levels) == \
            (other.id, other.dims, other.out_slots, other.semantics, other.interval, other.levels) and \
            self.entries.dtype == other.entries.dtype and np.array_equal(self.entries, other.entries)


@dataclass
class LatticeIndex:
    cell: np.ndarray
    frac: np.ndarray

    @property
    def value(self) -> np.ndarray:
        return self.cell * INTERVAL + self.frac


def quantize(pixels) -> LatticeIndex:
    """Split byte inputs (last axis = table dims) into lattice cell and offset within the cell."""
    p = np.asarray(pixels)
    if p.size and (p.min() < 0 or p.max() > 255):
        raise ValueError("pixel values must be bytes")
    p = p.astype(np.int64)
    return LatticeIndex(p // INTERVAL, p % INTERVAL)


def lattice_values(dims: int) -> np.ndarray:
    """All probe inputs in row-major lattice order, shape (dims, 17**dims); the top level probes 255."""
    levels = np.minimum(np.arange(LEVELS) * INTERVAL, 255)
    grids = np.meshgrid(*([levels] * dims), indexing="ij")
    return np.stack([g.ravel() for g in grids])


@dataclass
class FunctionUnit:
    """Adapter so any function of (taps x samples) normalized columns can be baked."""

    uid: str
    arity: int
    out_slots: int
    semantics: str
    fn: Callable

    def evaluate(self, cols):
        return np.asarray(self.fn(cols), dtype=np.float64).reshape(self.out_slots, -1)


def bake(unit, pattern=None, table_id: Optional[str] = None) -> LutTable:
    """Cache ``unit`` on every lattice point of its input space.

    ``unit`` needs ``arity``, ``out_slots``, ``semantics`` and ``evaluate(cols)``
    taking normalized (level/255) inputs.  Outputs are rounded to entry levels
    and clamped to the entry type.
    """
    d = unit.arity
    if pattern is not None and getattr(pattern, "index_dims", d) != d:
        raise ValueError(f"pattern indexes {pattern.index_dims} dims but unit takes {d} inputs")
    if d > 4:
        raise ValueError(f"refusing to bake a {d}D table: 17^{d} entries per slot")
    probes = lattice_values(d).astype(np.float32) / np.float32(255.0)
    n = probes.shape[1]
    lo, hi = entry_bounds(unit.semantics)
    out = np.empty((unit.out_slots, n), dtype=entry_dtype(unit.semantics))
    for s in range(0, n, BAKE_BATCH):
        y = unit.evaluate(probes[:, s:s + BAKE_BATCH])
        out[:, s:s + BAKE_BATCH] = np.clip(round_half_away(np.asarray(y, np.float64) * 255.0), lo, hi)
    return LutTable(table_id or unit.uid, d, unit.out_slots, unit.semantics, out)


# --- storage law -------------------------------------------------------------

def lut_size_bytes(k: int, c: int, width: Optional[int] = None) -> int:
    """Bytes of one single-slot, 1-byte-entry table indexed by a k x width x c footprint."""
    width = k if width is None else width
    if k < 1 or c < 1 or width < 1:
        raise ValueError("kernel side and depth must be positive")
    return LEVELS ** (k * width * c)


def table_bytes(dims: int, out_slots: int = 1) -> int:
    return out_slots * LEVELS ** dims


def human_bytes(n: int) -> str:
    """Decimal units with one decimal place, as storage tables usually quote them."""
    if n < 1000:
        return f"{n} B"
    for unit in ("KB", "MB", "GB", "TB", "PB", "EB", "ZB", "YB"):
        n_f = n / 1000
        if n_f < 1000 or unit == "YB":
            return f"{n_f:.1f} {unit}"
        n = n_f
    raise AssertionError


# --- file format -------------------------------------------------------------

_HEADER = struct.Struct("<4sHBBBBHH")  # magic, version, dims, levels, interval, semantics, slots, id length


def serialize(table: LutTable) -> bytes:
    name = table.id.encode("utf-8")
    head = _HEADER.pack(MAGIC, VERSION, table.dims, table.levels, table.interval,
                        SEMANTIC_TAGS[table.semantics], table.out_slots, len(name))
    payload = np.ascontiguousarray(table.entries).tobytes()
    return head + name + struct.pack("<Q", len(payload)) + payload


def deserialize(blob: bytes) -> LutTable:
    if len(blob) < _HEADER.size:
        raise LutFormatError("truncated", f"{len(blob)} bytes, header needs {_HEADER.size}")
    magic, version, dims, levels, interval, tag, slots, nlen = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise LutFormatError("bad-magic", repr(magic))
    if version != VERSION:
        raise LutFormatError("bad-version", str(version))
    semantics = {v: k for k, v in SEMANTIC_TAGS.items()}.get(tag)
    if semantics is None:
        raise LutFormatError("invalid", f"semantics tag {tag}")
    pos = _HEADER.size
    if len(blob) < pos + nlen + 8:
        raise LutFormatError("truncated", "id / payload length")
    name = blob[pos:pos + nlen].decode("utf-8")
    pos += nlen
    (plen,) = struct.unpack_from("<Q", blob, pos)
    pos += 8
    want = slots * levels ** dims
    if plen != want:
        raise LutFormatError("invalid", f"payload {plen} bytes, expected {want}")
    if len(blob) < pos + plen:
        raise LutFormatError("truncated", f"payload has {len(blob) - pos} of {plen} bytes")
    if len(blob) > pos + plen:
        raise LutFormatError("invalid", "trailing bytes after payload")
    entries = np.frombuffer(blob, dtype=entry_dtype(semantics), count=plen, offset=pos)
    try:
        return LutTable(name, dims, slots, semantics, entries.reshape(slots, -1).copy(), interval, levels)
    except ValueError as e:
        raise LutFormatError("invalid", str(e)) from None


def save_table(table: LutTable, path) -> None:
    with open(path, "wb") as f:
        f.write(serialize(table))


def load_table(path) -> LutTable:
    with open(path, "rb") as f:
        return deserialize(f.read())
