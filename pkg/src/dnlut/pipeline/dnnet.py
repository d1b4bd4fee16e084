"""Float-mode pipeline built from a config: one trainable unit per table-to-be."""
from __future__ import annotations

import numpy as np

from ..micronet.block import NetUnit, make_unit
from ..micronet.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from ..micronet.tensor import LayerSpec
from .config import ConfigError, PipelineConfig
from .engine import Engine


class DnNet:
    """Float-mode pipeline: one :class:`NetUnit` per table-to-be."""

    def __init__(self, config: PipelineConfig, units: dict):
        self.config = config.with_mode("float")
        self.units = units
        self.engine = Engine(self.config, units)

    @classmethod
    def build(cls, config: PipelineConfig, seed: int = 0, dtype=np.float32) -> "DnNet":
        rng = np.random.default_rng(seed)
        units = {}
        for u in config.units():
            units[u.uid] = make_unit(u.uid, u.head_kind, u.taps, u.out_slots, u.semantics,
                                     config.hidden, config.depth, rng, u.skip, dtype)
        return cls(config, units)

    @classmethod
    def extend(cls, config: PipelineConfig, base: "DnNet", seed: int = 0) -> "DnNet":
        """A net for ``config`` that reuses every unit of ``base`` with a matching id and shape.

        New residual units get a zeroed output layer, so the extended net
        starts out computing exactly what ``base`` computes.
        """
        fresh = cls.build(config, seed)
        old = {u.uid: u for u in base.config.units()}
        for u in config.units():
            o = old.get(u.uid)
            if o is None:
                if u.semantics == "residual":
                    out = fresh.units[u.uid].layers[-1]
                    out.weights[...] = 0
                    out.bias[...] = 0
                continue
            if (o.head_kind, o.taps, o.out_slots, o.semantics, o.skip) != (u.head_kind, u.taps, u.out_slots, u.semantics, u.skip):
                raise ConfigError(f"unit {u.uid} differs between the base and the new pipeline")
            fresh.units[u.uid] = base.units[u.uid]
        return cls(config, fresh.units)

    def unit_list(self) -> list:
        return [self.units[uid] for uid in self.config.unit_ids()]

    def layers(self) -> list:
        return [l for u in self.unit_list() for l in u.layers]

    def params(self) -> list:
        return [p for u in self.unit_list() for p in u.params()]

    def grads(self) -> list:
        return [g for u in self.unit_list() for g in u.grads()]

    def zero_grad(self):
        for u in self.unit_list():
            u.zero_grad()

    def copy_params(self) -> list:
        return [p.copy() for p in self.params()]

    def load_params(self, values):
        for p, v in zip(self.params(), values):
            p[...] = v

    def set_layers(self, layers):
        """Replace all layer weights, e.g. from a checkpoint; kinds and shapes must match."""
        mine = self.layers()
        if len(layers) != len(mine):
            raise ValueError(f"checkpoint has {len(layers)} layers, pipeline needs {len(mine)}")
        for a, b in zip(mine, layers):
            if a.kind != b.kind or a.in_taps != b.in_taps or a.weights.shape != b.weights.shape:
                raise ValueError(f"checkpoint layer {b.kind}{b.weights.shape} does not fit {a.kind}{a.weights.shape}")
            a.weights[...] = b.weights
            a.bias[...] = b.bias
            a.activation = b.activation

    def save(self, path):
        save_checkpoint(path, self.layers(), self.config.to_text())

    @classmethod
    def load(cls, path) -> "DnNet":
        layers, text = load_checkpoint(path)
        if not text:
            raise CheckpointError("checkpoint carries no pipeline config")
        net = cls.build(PipelineConfig.from_text(text))
        net.set_layers(layers)
        return net

    # ---- execution ----------------------------------------------------

    def forward(self, x, train=False):
        return self.engine.forward(x, train)

    def backward(self, grad):
        return self.engine.backward(grad)

    def run_array(self, img_u8: np.ndarray) -> np.ndarray:
        """Denoise (N, 3, H, W) or (H, W, 3) uint8 data in float mode; returns the same layout."""
        hwc = img_u8.ndim == 3
        x = img_u8.transpose(2, 0, 1)[None] if hwc else img_u8
        y = self.forward(x.astype(np.float32) / np.float32(255.0))
        out = np.clip(np.rint(y * 255.0), 0, 255).astype(np.uint8)
        return out[0].transpose(1, 2, 0) if hwc else out

    def stage_levels(self, i: int, x_u8: np.ndarray, base_u8=None) -> np.ndarray:
        """One stage in float mode on integer levels; returns integer levels."""
        f = np.float32(255.0)
        base = None if base_u8 is None else base_u8.astype(np.float32) / f
        y, _ = self.engine.stage_forward(i, x_u8.astype(np.float32) / f, base, False)
        return np.rint(y * 255.0).astype(np.int64)
