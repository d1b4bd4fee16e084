"""Real-valued, differentiable execution of a pipeline graph.

The engine is agnostic to what evaluates a unit: a float network
(:class:`~dnlut.micronet.block.NetUnit`) during training, or a soft lookup
table during LUT-aware fine-tuning.  An evaluator needs ``evaluate(cols)``,
``forward(cols)`` and ``backward(grad_cols)`` on (taps x samples) columns in
normalized pixel units.

Stage outputs pass through 8-bit quantization with a straight-through
gradient, so training sees the same discretization as the baked chain.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..micronet.tensor import gather_taps, pad_edge, scatter_taps
from ..numeric import rot_ccw, rot_cw, round_half_away
from .config import PipelineConfig, StageSpec


def rotations(stage: StageSpec):
    return (0, 1, 2, 3) if stage.ensemble else (0,)


def quantize_ste(v):
    return round_half_away(v * 255.0).astype(v.dtype) / np.asarray(255.0, v.dtype)


@dataclass
class _UnitTape:
    uspec: object
    shapes: list
    in_shapes: list


class Engine:
    def __init__(self, config: PipelineConfig, evaluators: dict, quantize: bool = True):
        self.config = config
        self.evaluators = evaluators
        self.quantize = quantize  # off only for gradient checks
        missing = [u for u in config.unit_ids() if u not in evaluators]
        if missing:
            raise KeyError(f"no evaluator for units {missing}")
        self._tape = None

    # ---- forward --------------------------------------------------------

    def _unit_forward(self, block, uspec, x, rots, train):
        N, C, H, W = x.shape
        cols, shapes, in_shapes = [], [], []
        for r in rots:
            xp = pad_edge(rot_cw(x, r))
            if block.kind == "l-shaped":
                xp = xp.reshape(N * C, 1, xp.shape[2], xp.shape[3])
            in_shapes.append((xp.shape[0], xp.shape[1], xp.shape[2] - 1, xp.shape[3] - 1))
            g = gather_taps(xp, uspec.taps, padded=True)
            shapes.append(g.shape[1:])
            cols.append(g.reshape(len(uspec.taps), -1))
        cols = np.concatenate(cols, axis=1) if len(cols) > 1 else cols[0]
        ev = self.evaluators[uspec.uid]
        y = ev.forward(cols) if train else ev.evaluate(cols)
        out = None
        off = 0
        for r, shp in zip(rots, shapes):
            m = int(np.prod(shp))
            yr = y[:, off:off + m].reshape((y.shape[0],) + tuple(shp))
            off += m
            if block.kind == "l-shaped":
                yr = yr.reshape(N, C, shp[1], shp[2])
            else:
                yr = yr.transpose(1, 0, 2, 3)
            yr = rot_ccw(yr, r)
            out = yr.copy() if out is None else out + yr
        return out, _UnitTape(uspec, shapes, in_shapes)

    def _block_forward(self, stage, block, x, train):
        rots = rotations(stage)
        units = block.units(stage.semantics)
        tapes = []
        if block.kind == "pcm":
            parts = []
            for u in units:
                o, t = self._unit_forward(block, u, x, rots, train)
                parts.append(o)
                tapes.append(t)
            val = np.concatenate(parts, axis=1)
        else:
            val = None
            for u in units:
                o, t = self._unit_forward(block, u, x, rots, train)
                val = o if val is None else val + o
                tapes.append(t)
        scale = len(rots) * (len(units) if block.kind == "fusion" else 1)
        return val / np.asarray(scale, val.dtype), tapes

    def stage_forward(self, i: int, x, base=None, train=False):
        st = self.config.stages[i]
        vals, tapes = [], []
        for b in st.blocks:
            v, t = self._block_forward(st, b, x, train)
            vals.append(v)
            tapes.append(t)
        if st.combine == "concat":
            v = np.concatenate(vals, axis=1) if len(vals) > 1 else vals[0]
        elif st.combine == "sum":
            v = sum(vals[1:], vals[0])
        else:
            v = sum(vals[1:], vals[0]) / np.asarray(len(vals), vals[0].dtype)
        q = quantize_ste(v) if self.quantize else v
        pre = None
        if st.residual_from is not None:
            pre = base + q
            out = np.clip(pre, 0, 1)
        else:
            out = q
        return out, (tapes, [v.shape[1] for v in vals], pre)

    def forward(self, x, train=False):
        """Run all stages on normalized input (N, C, H, W); values are multiples of 1/255."""
        inputs = []
        tapes = []
        h = x
        for i, st in enumerate(self.config.stages):
            inputs.append(h)
            base = inputs[st.residual_from] if st.residual_from is not None else None
            h, t = self.stage_forward(i, h, base, train)
            tapes.append(t)
        self._tape = (inputs, tapes) if train else None
        return h

    def stage_outputs(self, x):
        outs = []
        h = x
        inputs = []
        for i, st in enumerate(self.config.stages):
            inputs.append(h)
            base = inputs[st.residual_from] if st.residual_from is not None else None
            h, _ = self.stage_forward(i, h, base, False)
            outs.append(h)
        return outs

    # ---- backward -------------------------------------------------------

    def _unit_backward(self, block, tape: _UnitTape, g_out, x_shape, rots):
        N, C, H, W = x_shape
        ev = self.evaluators[tape.uspec.uid]
        pieces = []
        for r, shp in zip(rots, tape.shapes):
            gr = rot_cw(g_out, r)
            if block.kind == "l-shaped":
                gr = gr.reshape(1, N * C, shp[1], shp[2])
            else:
                gr = gr.transpose(1, 0, 2, 3)
            pieces.append(np.ascontiguousarray(gr).reshape(gr.shape[0], -1))
        gy = np.concatenate(pieces, axis=1) if len(pieces) > 1 else pieces[0]
        gcols = ev.backward(gy)
        gx = np.zeros(x_shape, dtype=g_out.dtype)
        off = 0
        D = len(tape.uspec.taps)
        for r, shp, ishp in zip(rots, tape.shapes, tape.in_shapes):
            m = int(np.prod(shp))
            gt = gcols[:, off:off + m].reshape((D,) + tuple(shp))
            off += m
            gi = scatter_taps(gt, tape.uspec.taps, ishp)
            if block.kind == "l-shaped":
                gi = gi.reshape(N, C, ishp[2], ishp[3])
            gx += rot_ccw(gi, r)
        return gx

    def backward(self, grad_out):
        """Backpropagate d(loss)/d(output); evaluators accumulate their own parameter grads."""
        if self._tape is None:
            raise RuntimeError("backward needs a preceding forward(train=True)")
        inputs, tapes = self._tape
        n = len(self.config.stages)
        grads = [np.zeros_like(inp) for inp in inputs]
        g = grad_out
        for i in range(n - 1, -1, -1):
            st = self.config.stages[i]
            utapes, widths, pre = tapes[i]
            x = inputs[i]
            if st.residual_from is not None:
                g = g * ((pre >= 0) & (pre <= 1))
                grads[st.residual_from] += g
            # straight-through quantization, then split over blocks
            rots = rotations(st)
            if st.combine == "concat":
                splits = np.cumsum(widths)[:-1]
                gblocks = np.split(g, splits, axis=1)
            elif st.combine == "sum":
                gblocks = [g] * len(st.blocks)
            else:
                gblocks = [g / np.asarray(len(st.blocks), g.dtype)] * len(st.blocks)
            for b, gb, bt in zip(st.blocks, gblocks, utapes):
                units = b.units(st.semantics)
                scale = len(rots) * (len(units) if b.kind == "fusion" else 1)
                gb = gb / np.asarray(scale, gb.dtype)
                for k, t in enumerate(bt):
                    gu = gb[:, k:k + 1] if b.kind == "pcm" else gb
                    grads[i] += self._unit_backward(b, t, gu, x.shape, rots)
            g = grads[i]
        self._tape = None
        return grads[0]
