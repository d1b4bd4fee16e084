"""Dense NCHW tensors and the gather-affine layers that make up every LUT block.

Every trainable layer in this package is the same operation: gather a fixed
list of ``(dy, dx, channel)`` taps around each pixel, apply an affine map and
an elementwise activation.  The layer *kind* only constrains which taps are
legal, because the tap footprint is what decides whether the trained block
can later be baked into a 3D or 4D table.

Spatial taps reach at most one pixel right/down; the input is replicate-padded
by one pixel on the bottom and right edge, so the output keeps the input's
spatial size.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

KINDS = ("pcm-head", "l-shaped", "one-by-one", "fusion-group")
ACTIVATIONS = ("relu", "identity", "clamp01")

L_OFFSETS = ((0, 0), (0, 1), (1, 1))


class ShapeError(ValueError):
    pass


@dataclass
class Tensor:
    """Rank-4 ``(batch, channels, height, width)`` array with an optional gradient."""

    data: np.ndarray
    grad: Optional[np.ndarray] = None

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 4:
            raise ShapeError(f"tensor must be rank 4 (N,C,H,W), got shape {self.data.shape}")
        if self.grad is not None and np.shape(self.grad) != self.data.shape:
            raise ShapeError(f"grad shape {np.shape(self.grad)} != data shape {self.data.shape}")

    @property
    def shape(self):
        return self.data.shape

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)


Tap = tuple  # (dy, dx, channel)


def _check_taps(kind: str, taps: Sequence[Tap]):
    if kind not in KINDS:
        raise ValueError(f"unknown layer kind {kind!r}")
    for t in taps:
        if len(t) != 3 or not all(isinstance(v, (int, np.integer)) for v in t):
            raise ValueError(f"tap must be an integer (dy, dx, channel) triple, got {t!r}")
        dy, dx, c = t
        if dy not in (0, 1) or dx not in (0, 1) or c < 0:
            raise ValueError(f"tap {t!r} outside the supported 2x2 footprint")
    if kind == "pcm-head":
        if len(taps) != 4:
            raise ValueError("pcm-head needs exactly 4 taps")
        c, c2 = taps[0][2], taps[2][2]
        expected = [(0, 0, c), (0, 1, c), (0, 0, c2), (0, 1, c2)]
        if [tuple(t) for t in taps] != expected or c == c2:
            raise ValueError(f"pcm-head taps must be (0,0,c),(0,1,c),(0,0,c'),(0,1,c') with c != c'; got {taps}")
    elif kind == "l-shaped":
        chans = {t[2] for t in taps}
        if len(taps) != 3 or len(chans) != 1 or [tuple(t[:2]) for t in taps] != list(L_OFFSETS):
            raise ValueError(f"l-shaped taps must be (0,0),(0,1),(1,1) on one channel; got {taps}")
    else:
        if any(t[0] or t[1] for t in taps):
            raise ValueError(f"{kind} taps must all sit at (0,0)")
        chans = [t[2] for t in taps]
        if len(set(chans)) != len(chans):
            raise ValueError(f"{kind} taps repeat a channel: {chans}")
        if kind == "fusion-group" and len(chans) > 4:
            raise ValueError("a fusion group reads at most 4 channels")


@dataclass
class LayerSpec:
    kind: str
    in_taps: tuple
    weights: np.ndarray
    bias: np.ndarray
    activation: str = "relu"

    def __post_init__(self):
        self.in_taps = tuple(tuple(int(v) for v in t) for t in self.in_taps)
        self.weights = np.asarray(self.weights)
        self.bias = np.asarray(self.bias)
        _check_taps(self.kind, self.in_taps)
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.weights.ndim != 2 or self.weights.shape[1] != len(self.in_taps):
            raise ShapeError(f"weights must be (out, {len(self.in_taps)}), got {self.weights.shape}")
        if self.bias.shape != (self.weights.shape[0],):
            raise ShapeError(f"bias must have shape ({self.weights.shape[0]},), got {self.bias.shape}")

    @property
    def out_channels(self) -> int:
        return self.weights.shape[0]

    @property
    def max_channel(self) -> int:
        return max(t[2] for t in self.in_taps)

    @property
    def spatial(self) -> bool:
        return any(t[0] or t[1] for t in self.in_taps)


def one_by_one(in_channels: int, out_channels: int, rng=None, activation="relu", scale=None, dtype=np.float32) -> LayerSpec:
    rng = np.random.default_rng(0) if rng is None else rng
    return LayerSpec("one-by-one", [(0, 0, c) for c in range(in_channels)],
                     he_init(rng, out_channels, in_channels, scale, dtype),
                     np.zeros(out_channels, dtype), activation)


def he_init(rng, out_ch, in_ch, scale=None, dtype=np.float32):
    std = np.sqrt(2.0 / in_ch) if scale is None else scale
    return (rng.standard_normal((out_ch, in_ch)) * std).astype(dtype)


# --- core math on column matrices (features x samples) -------------------

def activate(pre: np.ndarray, act: str, out=None) -> np.ndarray:
    if act == "relu":
        return np.maximum(pre, 0, out=out)
    if act == "clamp01":
        return np.clip(pre, 0, 1, out=out)
    return pre


def activation_grad(pre: np.ndarray, grad: np.ndarray, act: str) -> np.ndarray:
    """Gradient through the activation; ``pre`` may be the ReLU *output* (same sign pattern)."""
    if act == "relu":
        return grad * (pre > 0)
    if act == "clamp01":
        return grad * ((pre > 0) & (pre < 1))
    return grad


def affine_cols(w, b, act, cols):
    """``act(w @ cols + b)``; returns (output, saved) where ``saved`` feeds the backward pass.

    For ReLU the saved array *is* the output (its positive set equals the
    pre-activation's), which avoids keeping a second copy.
    """
    pre = w @ cols
    pre += b[:, None]
    if act == "relu":
        np.maximum(pre, 0, out=pre)
        return pre, pre
    return activate(pre, act), pre


def affine_cols_backward(w, act, cols, saved, grad):
    g = activation_grad(saved, grad, act)
    return w.T @ g, g @ cols.T, g.sum(axis=1)


# --- spatial gather with replicate padding -------------------------------

def pad_edge(x: np.ndarray) -> np.ndarray:
    """Replicate-pad one row at the bottom and one column at the right of (..., H, W)."""
    pad = [(0, 0)] * (x.ndim - 2) + [(0, 1), (0, 1)]
    return np.pad(x, pad, mode="edge")


def gather_taps(x: np.ndarray, taps, padded=False) -> np.ndarray:
    """Collect ``taps`` from an (N,C,H,W) array into a (D, N, H, W) array."""
    if padded:
        xp = x
        H, W = x.shape[2] - 1, x.shape[3] - 1
    else:
        H, W = x.shape[2], x.shape[3]
        xp = pad_edge(x) if any(t[0] or t[1] for t in taps) else x
    out = np.empty((len(taps), x.shape[0], H, W), dtype=x.dtype)
    for i, (dy, dx, c) in enumerate(taps):
        out[i] = xp[:, c, dy:dy + H, dx:dx + W]
    return out


def scatter_taps(grad_taps: np.ndarray, taps, shape) -> np.ndarray:
    """Adjoint of :func:`gather_taps`: route tap gradients back to (clamped) source pixels."""
    N, C, H, W = shape
    gp = np.zeros((N, C, H + 1, W + 1), dtype=grad_taps.dtype)
    for i, (dy, dx, c) in enumerate(taps):
        gp[:, c, dy:dy + H, dx:dx + W] += grad_taps[i]
    g = gp[:, :, :H, :W].copy()
    g[:, :, H - 1, :] += gp[:, :, H, :W]
    g[:, :, :, W - 1] += gp[:, :, :H, W]
    g[:, :, H - 1, W - 1] += gp[:, :, H, W]
    return g


# --- layer objects --------------------------------------------------------

@dataclass
class Layer:
    """A :class:`LayerSpec` plus the cache needed for its backward pass."""

    spec: LayerSpec
    _cache: Optional[tuple] = field(default=None, repr=False)

    def forward(self, x: Tensor) -> Tensor:
        s = self.spec
        N, C, H, W = x.shape
        if s.max_channel >= C:
            raise ShapeError(f"{s.kind} layer reads channel {s.max_channel} but input has {C} channels")
        if s.spatial and (H < 1 or W < 1):
            raise ShapeError("spatial taps need a non-empty image")
        cols = gather_taps(x.data, s.in_taps).reshape(len(s.in_taps), -1)
        out, pre = affine_cols(s.weights, s.bias, s.activation, cols)
        self._cache = (x, cols, pre)
        out = out.reshape(s.out_channels, N, H, W).transpose(1, 0, 2, 3)
        return Tensor(out)

    def backward(self, x: Tensor, output_grad: np.ndarray):
        """Return ``(input_grad, weight_grad, bias_grad)`` for the cached forward."""
        if self._cache is None:
            raise RuntimeError("backward called before forward: no cached activations")
        cx, cols, pre = self._cache
        if cx is not x:
            raise RuntimeError("backward input differs from the input of the cached forward")
        s = self.spec
        N, C, H, W = x.shape
        g = np.asarray(output_grad)
        if g.shape != (N, s.out_channels, H, W):
            raise ShapeError(f"output_grad shape {g.shape} != {(N, s.out_channels, H, W)}")
        g = g.transpose(1, 0, 2, 3).reshape(s.out_channels, -1)
        gin, gw, gb = affine_cols_backward(s.weights, s.activation, cols, pre, g)
        gin = scatter_taps(gin.reshape(len(s.in_taps), N, H, W), s.in_taps, x.shape)
        return gin, gw, gb


def forward(layer: Layer, x: Tensor) -> Tensor:
    return layer.forward(x)


def backward(layer: Layer, x: Tensor, output_grad):
    return layer.backward(x, output_grad)


def mse_loss(pred, target):
    """Mean squared error and its gradient with respect to ``pred``."""
    p = pred.data if isinstance(pred, Tensor) else np.asarray(pred)
    t = target.data if isinstance(target, Tensor) else np.asarray(target)
    if p.shape != t.shape:
        raise ShapeError(f"mse_loss shape mismatch: {p.shape} vs {t.shape}")
    diff = p - t
    return float(np.mean(np.square(diff, dtype=np.float64))), (2.0 / diff.size) * diff
