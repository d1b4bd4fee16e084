"""LUT-aware fine-tuning: table entries as continuous parameters.

A :class:`SoftLut` mirrors a baked table with real-valued entries (in
normalized pixel units) and plugs into the differentiable pipeline engine in
place of the float network.  Inter-stage rounding and the byte quantization
of table inputs pass gradients straight through.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .interp import soft_interpolate, soft_interpolate_backward
from .lut import LatticeIndex, LutTable, entry_bounds, entry_dtype, quantize
from .micronet.optim import Adam
from .micronet.tensor import mse_loss
from .numeric import round_half_away
from .pipeline.engine import Engine
from .pipeline.lutmode import DnLUT

log = logging.getLogger(__name__)

SCALE = 255.0


@dataclass
class SoftLut:
    source: LutTable
    entries: Optional[np.ndarray] = None
    grad: Optional[np.ndarray] = None
    dtype: type = np.float64
    _saved: Optional[tuple] = field(default=None, repr=False)

    def __post_init__(self):
        if self.entries is None:
            self.entries = self.source.entries.astype(self.dtype) / self.dtype(SCALE)
        if self.entries.shape != self.source.entries.shape:
            raise ValueError("soft entries must match the source table's shape")
        self.grad = np.zeros_like(self.entries)

    @property
    def bounds(self):
        lo, hi = entry_bounds(self.source.semantics)
        return lo / SCALE, hi / SCALE

    def zero_grad(self):
        self.grad[...] = 0

    def project(self):
        lo, hi = self.bounds
        np.clip(self.entries, lo, hi, out=self.entries)

    def export(self) -> LutTable:
        lo, hi = entry_bounds(self.source.semantics)
        e = np.clip(round_half_away(self.entries * SCALE), lo, hi).astype(entry_dtype(self.source.semantics))
        s = self.source
        return LutTable(s.id, s.dims, s.out_slots, s.semantics, e, s.interval, s.levels)

    # ---- evaluator protocol (columns in normalized units) ----------------

    def _index(self, cols):
        levels = np.clip(round_half_away(np.asarray(cols, np.float64) * SCALE), 0, 255).astype(np.int64)
        return quantize(levels.T)

    def evaluate(self, cols):
        q = self._index(cols)
        return soft_interpolate(self.entries, q.cell, q.frac)[0]

    def forward(self, cols):
        q = self._index(cols)
        out, self._saved = soft_interpolate(self.entries, q.cell, q.frac)
        return out

    def backward(self, grad):
        if self._saved is None:
            raise RuntimeError(f"soft table {self.source.id}: backward before forward")
        gent, gin = soft_interpolate_backward(self.entries.shape[1], self._saved,
                                              np.asarray(grad, self.entries.dtype))
        self.grad += gent
        self._saved = None
        return gin.T * SCALE


def soft_lookup(table: SoftLut, idx: LatticeIndex):
    """Real-valued interpolation at (M, D) indices.

    Returns ``(values, backward)`` where ``backward(grad)`` gives the entry
    gradient (slots x entries) and the gradient w.r.t. the byte inputs (M x D).
    """
    cell = np.atleast_2d(idx.cell)
    frac = np.atleast_2d(idx.frac)
    out, saved = soft_interpolate(table.entries, cell, frac)

    def backward(grad):
        return soft_interpolate_backward(table.entries.shape[1], saved, np.asarray(grad, table.entries.dtype))

    return out, backward


# --- optimisation loop -------------------------------------------------------

@dataclass
class FinetuneResult:
    lut: DnLUT
    mse_before: float
    mse_after: float
    losses: list = field(default_factory=list)
    reverted: bool = False
    reason: str = ""
    history: list = field(default_factory=list)  # (iteration, validation MSE) at each check


def lut_mse(lut: DnLUT, pairs) -> float:
    """MSE (normalized units) of the integer pipeline on (noisy, clean) uint8 NCHW batches."""
    se, n = 0.0, 0
    for noisy, clean in pairs:
        y = lut.run_levels(noisy).astype(np.float64)
        se += float(np.sum(np.square(y - clean)))
        n += y.size
    return se / n / SCALE ** 2


def validation_pairs(stream, batches: int = 6, offset: int = 10 ** 6):
    """Byte-valued validation batches from a patch stream at indices unused by training."""
    out = []
    for t in range(offset, offset + batches):
        noisy, clean = stream.batch(t)
        out.append((np.rint(noisy * SCALE).astype(np.uint8), np.rint(clean * SCALE).astype(np.uint8)))
    return out


def finetune(lut: DnLUT, data, iterations: int = 2000, lr: float = 1e-4, validation=None,
             check_every: int = 500, units=None, log_every: int = 0, on_check=None) -> FinetuneResult:
    """Optimize table entries end to end with Adam at a constant rate.

    ``validation`` holds (noisy, clean) byte batches; the integer pipeline is
    scored on it before training and every ``check_every`` iterations, and the
    best-scoring tables are kept.  A non-finite loss reverts to the input
    tables.  ``on_check(t, lut, mse)`` is called at every check.
    """
    validation = validation_pairs(data) if validation is None else validation
    before = lut_mse(lut, validation)
    ids = lut.config.unit_ids() if units is None else list(units)
    soft = {uid: SoftLut(t) for uid, t in lut.tables.items()}
    engine = Engine(lut.config, soft)
    params = [soft[u].entries for u in ids]
    opt = Adam()
    best, best_mse = lut, before
    res = FinetuneResult(lut, before, before, history=[(0, before)])

    def snapshot():
        return DnLUT(lut.config, {uid: s.export() for uid, s in soft.items()})

    for t in range(1, iterations + 1):
        noisy, clean = data.batch(t)
        for s in soft.values():
            s.zero_grad()
        pred = engine.forward(noisy.astype(np.float64), train=True)
        loss, g = mse_loss(pred, clean)
        if not math.isfinite(loss):
            res.lut, res.mse_after, res.reverted, res.reason = lut, before, True, f"non-finite loss at iteration {t}"
            log.warning("fine-tuning diverged at iteration %d; tables reverted", t)
            return res
        res.losses.append(loss)
        engine.backward(g)
        opt.step(params, [soft[u].grad for u in ids], t, lr)
        for u in ids:
            soft[u].project()
        if log_every and t % log_every == 0:
            log.info("finetune iter %d  loss %.6f", t, float(np.mean(res.losses[-log_every:])))
        if t % check_every == 0 or t == iterations:
            cand = snapshot()
            m = lut_mse(cand, validation)
            res.history.append((t, m))
            if on_check is not None:
                on_check(t, cand, m)
            if m <= best_mse:
                best, best_mse = cand, m
    res.lut, res.mse_after = best, best_mse
    if best is lut:
        res.reverted, res.reason = True, "no checkpoint improved validation MSE"
    return res
