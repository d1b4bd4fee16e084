"""A LUT-convertible network unit: one gather head, cascaded 1x1 layers, one table.

Units work on *column* matrices: row ``i`` holds the value of head tap ``i``
for every sample, so the same code path serves training (taps gathered from
rotated images) and baking (taps enumerated over the lattice).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .tensor import LayerSpec, affine_cols, affine_cols_backward, he_init

SEMANTICS = ("residual", "direct", "feature")

# output range per semantics, in normalized pixel units (level / 255)
RANGES = {
    "feature": (0.0, 1.0),
    "direct": (0.0, 1.0),
    "residual": (-128 / 255, 127 / 255),
}


@dataclass
class NetUnit:
    uid: str
    layers: list
    semantics: str = "feature"
    skip: Optional[tuple] = None
    _cache: Optional[list] = field(default=None, repr=False)
    _grads: Optional[list] = field(default=None, repr=False)

    def __post_init__(self):
        if self.semantics not in SEMANTICS:
            raise ValueError(f"unknown semantics {self.semantics!r}")
        if self.skip is not None:
            self.skip = tuple(self.skip)
            if len(self.skip) != self.out_slots:
                raise ValueError("skip needs one entry per output slot")
            for s in self.skip:
                if s is not None and not 0 <= s < self.arity:
                    raise ValueError(f"skip tap {s} outside head arity {self.arity}")
        for a, b in zip(self.layers, self.layers[1:]):
            if b.weights.shape[1] != a.out_channels:
                raise ValueError(f"unit {self.uid}: layer widths do not chain")

    @property
    def head(self) -> LayerSpec:
        return self.layers[0]

    @property
    def arity(self) -> int:
        return len(self.head.in_taps)

    @property
    def out_slots(self) -> int:
        return self.layers[-1].out_channels

    @property
    def bounds(self):
        return RANGES[self.semantics]

    def params(self):
        out = []
        for l in self.layers:
            out += [l.weights, l.bias]
        return out

    def grads(self):
        if self._grads is None:
            self.zero_grad()
        return self._grads

    def zero_grad(self):
        self._grads = [np.zeros_like(p) for p in self.params()]

    def _skip_add(self, y, cols):
        if self.skip is not None:
            for k, s in enumerate(self.skip):
                if s is not None:
                    y[k] += cols[s]
        return y

    def evaluate(self, cols: np.ndarray) -> np.ndarray:
        """Unit output (slots x samples), clamped to the semantic range. No cache."""
        h = cols
        for l in self.layers:
            h, _ = affine_cols(l.weights, l.bias, l.activation, h)
        lo, hi = self.bounds
        return np.clip(self._skip_add(h, cols), lo, hi)

    def forward(self, cols: np.ndarray) -> np.ndarray:
        cache = []
        h = cols
        for l in self.layers:
            out, pre = affine_cols(l.weights, l.bias, l.activation, h)
            cache.append((h, pre))
            h = out
        y = self._skip_add(h, cols)
        lo, hi = self.bounds
        self._cache = (cols, cache, y)
        return np.clip(y, lo, hi)

    def backward(self, grad: np.ndarray) -> np.ndarray:
        """Accumulate parameter gradients; return the gradient w.r.t. the tap columns."""
        if self._cache is None:
            raise RuntimeError(f"unit {self.uid}: backward before forward")
        cols, cache, y = self._cache
        lo, hi = self.bounds
        g = grad * ((y > lo) & (y < hi))
        grads = self.grads()
        gskip = np.zeros_like(cols)
        if self.skip is not None:
            for k, s in enumerate(self.skip):
                if s is not None:
                    gskip[s] += g[k]
        for i in range(len(self.layers) - 1, -1, -1):
            l = self.layers[i]
            h, pre = cache[i]
            g, gw, gb = affine_cols_backward(l.weights, l.activation, h, pre, g)
            grads[2 * i] += gw
            grads[2 * i + 1] += gb
        self._cache = None
        return g + gskip


def make_unit(uid, head_kind, head_taps, out_slots, semantics="feature", hidden=16, depth=3,
              rng=None, skip=None, dtype=np.float32) -> NetUnit:
    """Head (taps -> hidden, ReLU), ``depth - 1`` hidden 1x1 ReLU layers, then a 1x1 output layer."""
    rng = np.random.default_rng(0) if rng is None else rng
    if depth < 1:
        raise ValueError("depth must be at least 1")
    d = len(head_taps)
    layers = [LayerSpec(head_kind, head_taps, he_init(rng, hidden, d, dtype=dtype), np.zeros(hidden, dtype), "relu")]
    for _ in range(depth - 1):
        layers.append(LayerSpec("one-by-one", [(0, 0, c) for c in range(hidden)],
                                he_init(rng, hidden, hidden, dtype=dtype), np.zeros(hidden, dtype), "relu"))
    # small output layer so a skip unit starts near its anchor and a residual unit near zero
    w_out = he_init(rng, out_slots, hidden, scale=0.1 / np.sqrt(hidden), dtype=dtype)
    b_out = np.zeros(out_slots, dtype)
    if skip is None and semantics != "residual":
        b_out += 0.5
    layers.append(LayerSpec("one-by-one", [(0, 0, c) for c in range(hidden)], w_out, b_out, "identity"))
    return NetUnit(uid, layers, semantics, skip)
