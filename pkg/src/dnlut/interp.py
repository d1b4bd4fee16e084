"""Simplex (4D) and tetrahedral (3D) interpolation on the 17-level lattice.

The fractional offsets inside a cell are sorted in descending order; the
simplex vertices then form a chain from the cell origin to the far corner,
adding one axis at a time in that order.  All weights are integers summing
to the interval, so lookups stay in exact integer arithmetic until a single
final rounding.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lut import INTERVAL, LEVELS, LatticeIndex, LutTable
from .numeric import div_round


@dataclass
class SimplexWeights:
    vertex_offsets: np.ndarray  # (D+1, D) of 0/1
    weights: np.ndarray  # (D+1,) integers summing to 16


def simplex_order(frac: np.ndarray) -> np.ndarray:
    """Axis order by descending offset; ties keep ascending axis index."""
    return np.argsort(-np.asarray(frac), axis=-1, kind="stable")


def simplex_weights(frac) -> SimplexWeights:
    frac = np.asarray(frac, dtype=np.int64)
    d = frac.shape[-1]
    if frac.ndim != 1 or d not in (3, 4):
        raise ValueError("simplex_weights takes one 3D or 4D offset vector")
    order = simplex_order(frac)
    fs = frac[order]
    w = np.empty(d + 1, dtype=np.int64)
    w[0] = INTERVAL - fs[0]
    w[1:d] = fs[:-1] - fs[1:]
    w[d] = fs[-1]
    offsets = np.zeros((d + 1, d), dtype=np.int64)
    for j in range(1, d + 1):
        offsets[j] = offsets[j - 1]
        offsets[j, order[j - 1]] = 1
    return SimplexWeights(offsets, w)


def batch_weights(frac: np.ndarray):
    """Vectorized weights for (M, D) offsets: returns (order (M,D), weights (M,D+1))."""
    frac = np.asarray(frac, dtype=np.int64)
    order = simplex_order(frac)
    fs = np.take_along_axis(frac, order, axis=1)
    m, d = frac.shape
    w = np.empty((m, d + 1), dtype=np.int64)
    w[:, 0] = INTERVAL - fs[:, 0]
    w[:, 1:d] = fs[:, :-1] - fs[:, 1:]
    w[:, d] = fs[:, -1]
    return order, w


def vertex_indices(cell: np.ndarray, order: np.ndarray) -> np.ndarray:
    """Flat table index of each chain vertex, shape (M, D+1)."""
    d = cell.shape[1]
    strides = LEVELS ** np.arange(d - 1, -1, -1)
    base = cell @ strides
    steps = strides[order]
    return np.concatenate([base[:, None], base[:, None] + np.cumsum(steps, axis=1)], axis=1)


def interpolate_sum(entries: np.ndarray, cell: np.ndarray, frac: np.ndarray) -> np.ndarray:
    """Unrounded weighted sum (slots x M), i.e. 16 x the interpolated value, as int64."""
    order, w = batch_weights(frac)
    vi = vertex_indices(cell, order)
    e = entries.astype(np.int64)
    acc = np.zeros((e.shape[0], cell.shape[0]), dtype=np.int64)
    for j in range(vi.shape[1]):
        acc += w[:, j] * e[:, vi[:, j]]
    return acc


def interpolate(table: LutTable, idx: LatticeIndex) -> np.ndarray:
    """Interpolated entries for one index (shape (D,)) or many (shape (M, D)).

    Returns ``out_slots`` integers per query: shape (slots,) or (slots, M).
    """
    cell = np.asarray(idx.cell, dtype=np.int64)
    frac = np.asarray(idx.frac, dtype=np.int64)
    single = cell.ndim == 1
    cell = np.atleast_2d(cell)
    frac = np.atleast_2d(frac)
    if cell.shape[1] != table.dims:
        raise ValueError(f"index has {cell.shape[1]} dims, table {table.id} has {table.dims}")
    out = div_round(interpolate_sum(table.entries, cell, frac), INTERVAL)
    return out[:, 0] if single else out


def interpolate_scalar(table: LutTable, cell, frac) -> np.ndarray:
    """Unvectorized reference path, one query at a time."""
    sw = simplex_weights(frac)
    acc = np.zeros(table.out_slots, dtype=np.int64)
    for off, w in zip(sw.vertex_offsets, sw.weights):
        acc += int(w) * table.entry(np.asarray(cell) + off).astype(np.int64)
    return div_round(acc, INTERVAL)


# --- real-valued twin, for fine-tuning ------------------------------------

def soft_interpolate(entries: np.ndarray, cell: np.ndarray, frac: np.ndarray):
    """Real-valued interpolation (slots x M) plus what the backward pass needs."""
    order, w = batch_weights(frac)
    vi = vertex_indices(cell, order)
    wf = w.astype(entries.dtype) / entries.dtype.type(INTERVAL)
    vals = entries[:, vi]  # (S, M, D+1)
    out = np.einsum("smj,mj->sm", vals, wf)
    return out, (order, wf, vi, vals)


def soft_interpolate_backward(n_entries: int, saved, grad: np.ndarray):
    """Gradients w.r.t. entries (slots x n_entries) and w.r.t. the byte-valued inputs (M x D).

    Moving along axis ``order[k]`` only shifts weight from vertex k to vertex
    k+1, so d(out)/d(input) = (E[v_k+1] - E[v_k]) / 16 on that axis.
    """
    order, wf, vi, vals = saved
    s, m = grad.shape
    d = order.shape[1]
    gent = np.empty((s, n_entries), dtype=grad.dtype)
    flat = vi.ravel()
    for k in range(s):
        contrib = (grad[k][:, None] * wf).ravel()
        gent[k] = np.bincount(flat, weights=contrib, minlength=n_entries)
    diffs = (vals[:, :, 1:] - vals[:, :, :-1]) / grad.dtype.type(INTERVAL)  # (S, M, D)
    gsorted = np.einsum("sm,smk->mk", grad, diffs)
    gin = np.empty((m, d), dtype=grad.dtype)
    np.put_along_axis(gin, order, gsorted, axis=1)
    return gent, gin
