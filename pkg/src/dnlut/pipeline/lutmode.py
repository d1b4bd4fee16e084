"""Table-mode (DnLUT) inference in exact integer arithmetic.

Every stage has a single rounding point: per-vertex weighted sums are
accumulated over rotations, fusion groups and (for ``sum``/``average``
stages) blocks as integers, then divided once, rounding half away from zero.
"""
from __future__ import annotations

import configparser
import hashlib
import math
from pathlib import Path
from typing import Optional

import numpy as np

from ..interp import interpolate_sum
from ..lut import INTERVAL, LutTable, bake, load_table, quantize, save_table, serialize
from ..micronet.tensor import gather_taps, pad_edge
from ..numeric import div_round, rot_ccw, rot_cw
from .config import PAIR_NAMES, BlockSpec, ConfigError, PipelineConfig, StageSpec, UnitSpec
from .engine import rotations

MANIFEST_FORMAT = "dnlut-manifest-1"


class MissingTableError(KeyError):
    def __init__(self, uid: str):
        super().__init__(uid)
        self.uid = uid

    def __str__(self):
        return f"missing table {self.uid!r}"


def check_table(u: UnitSpec, t: LutTable):
    if t.dims != u.dims or t.out_slots != u.out_slots or t.semantics != u.semantics:
        raise ConfigError(f"table {u.uid}: {t.dims}D/{t.out_slots} slots/{t.semantics} does not fit "
                          f"unit {u.dims}D/{u.out_slots} slots/{u.semantics}")


# --- kernels -----------------------------------------------------------------

def unit_sum(table: LutTable, x: np.ndarray, taps, per_channel: bool, r: int) -> np.ndarray:
    """Integer sums (16 x interpolated value) of one unit under rotation ``r``, rotated back.

    ``x`` is (N, C, H, W) integer levels.  Per-channel units (L-shaped) run on
    every channel with shared entries and return (N, C, H, W); the others
    return (N, slots, H, W).
    """
    N, C, H, W = x.shape
    xp = pad_edge(rot_cw(x, r))
    if per_channel:
        xp = xp.reshape(N * C, 1, xp.shape[2], xp.shape[3])
    g = gather_taps(xp, taps, padded=True)
    shp = g.shape[1:]
    q = quantize(g.reshape(len(taps), -1).T)
    acc = interpolate_sum(table.entries, q.cell, q.frac).reshape((table.out_slots,) + shp)
    if per_channel:
        acc = acc.reshape(N, C, shp[1], shp[2])
    else:
        acc = acc.transpose(1, 0, 2, 3)
    return rot_ccw(acc, r)


def block_sum(block: BlockSpec, stage: StageSpec, tables: dict, x: np.ndarray):
    """(integer numerator, denominator) of a block's output."""
    rots = rotations(stage)
    units = block.units(stage.semantics)
    for u in units:
        if u.uid not in tables:
            raise MissingTableError(u.uid)
    if block.kind == "pcm":
        parts = []
        for u in units:
            parts.append(sum(unit_sum(tables[u.uid], x, u.taps, False, r) for r in rots))
        return np.concatenate(parts, axis=1), INTERVAL * len(rots)
    per_channel = block.kind == "l-shaped"
    acc = None
    for u in units:
        for r in rots:
            s = unit_sum(tables[u.uid], x, u.taps, per_channel, r)
            acc = s if acc is None else acc + s
    return acc, INTERVAL * len(rots) * (len(units) if block.kind == "fusion" else 1)


def stage_levels(stage: StageSpec, tables: dict, x: np.ndarray, base: Optional[np.ndarray] = None) -> np.ndarray:
    """One stage on integer levels; the ensemble average and the block combine share one rounding."""
    sums = [block_sum(b, stage, tables, x) for b in stage.blocks]
    if stage.combine == "concat":
        v = np.concatenate([div_round(n, d) for n, d in sums], axis=1)
    else:
        den = math.lcm(*[d for _, d in sums])
        num = sum(n * (den // d) for n, d in sums)
        if stage.combine == "average":
            den *= len(sums)
        v = div_round(num, den)
    if stage.residual_from is not None:
        if base is None:
            raise ValueError(f"stage {stage.name} adds a residual but no base was given")
        return np.clip(base.astype(np.int64) + v, 0, 255)
    return np.clip(v, 0, 255)


def rotation_ensemble_apply(img, stage: StageSpec, tables: dict, base=None) -> np.ndarray:
    """Stage output for an (H, W, C) or (N, C, H, W) integer image; layout is preserved."""
    a = np.asarray(img)
    hwc = a.ndim == 3
    x = a.transpose(2, 0, 1)[None] if hwc else a
    b = None
    if base is not None:
        b = np.asarray(base)
        b = b.transpose(2, 0, 1)[None] if hwc else b
    y = stage_levels(stage, tables, x.astype(np.int64), b)
    return y[0].transpose(1, 2, 0) if hwc else y


def _pcm_tables(tables: dict) -> dict:
    out = {}
    for pair in PAIR_NAMES:
        hit = [k for k in tables if k == pair or k.endswith("_" + pair)]
        if len(hit) != 1:
            raise MissingTableError(f"LUT_{pair}")
        out[pair] = tables[hit[0]]
    return out


def pcm_forward(img, tables: dict) -> np.ndarray:
    """Single-pass pairwise channel mixer on an (H, W, 3) image.

    Channel c reads (c, c+1 mod 3) at the pixel and its right neighbour from
    the table of that pair; returns (H, W, 3) integer levels.
    """
    t = _pcm_tables(tables)
    a = np.asarray(img).astype(np.int64)
    if a.ndim != 3 or a.shape[2] != 3:
        raise ValueError("pcm_forward expects an (H, W, 3) image")
    x = a.transpose(2, 0, 1)[None]
    out = []
    for c, pair in enumerate(PAIR_NAMES):
        c2 = (c + 1) % 3
        taps = ((0, 0, c), (0, 1, c), (0, 0, c2), (0, 1, c2))
        out.append(div_round(unit_sum(t[pair], x, taps, False, 0), INTERVAL))
    return np.concatenate(out, axis=1)[0].transpose(1, 2, 0)


# --- the pipeline ------------------------------------------------------------

class DnLUT:
    def __init__(self, config: PipelineConfig, tables: dict):
        self.config = config.with_mode("lut")
        self.tables = dict(tables)
        for u in self.config.units():
            if u.uid not in self.tables:
                raise MissingTableError(u.uid)
            check_table(u, self.tables[u.uid])

    def stage_levels(self, i: int, x, base=None) -> np.ndarray:
        return stage_levels(self.config.stages[i], self.tables, np.asarray(x, dtype=np.int64), base)

    def run_levels(self, x) -> np.ndarray:
        """(N, 3, H, W) integer input -> (N, 3, H, W) uint8."""
        h = np.asarray(x, dtype=np.int64)
        if h.ndim != 4 or h.shape[1] != self.config.in_channels:
            raise ConfigError(f"expected (N, {self.config.in_channels}, H, W) input, got {h.shape}")
        inputs = []
        for i, st in enumerate(self.config.stages):
            inputs.append(h)
            base = inputs[st.residual_from] if st.residual_from is not None else None
            h = self.stage_levels(i, h, base)
        return h.astype(np.uint8)

    def run_array(self, img: np.ndarray) -> np.ndarray:
        hwc = img.ndim == 3
        x = img.transpose(2, 0, 1)[None] if hwc else img
        y = self.run_levels(x)
        return y[0].transpose(1, 2, 0) if hwc else y

    def hash(self) -> str:
        h = hashlib.sha256(self.config.to_text().encode("utf-8"))
        for uid in self.config.unit_ids():
            h.update(uid.encode("utf-8"))
            h.update(serialize(self.tables[uid]))
        return h.hexdigest()

    def nbytes(self) -> int:
        return sum(t.nbytes for t in self.tables.values())

    def save(self, folder) -> Path:
        """Write config, one .dnlt per table and a manifest; returns the manifest path."""
        folder = Path(folder)
        folder.mkdir(parents=True, exist_ok=True)
        (folder / "pipeline.ini").write_text(self.config.to_text())
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        cp["manifest"] = {"format": MANIFEST_FORMAT, "config": "pipeline.ini", "hash": self.hash()}
        cp["tables"] = {}
        cp["roles"] = {}
        for st in self.config.stages:
            for b in st.blocks:
                for u in b.units(st.semantics):
                    fn = f"{u.uid}.dnlt"
                    save_table(self.tables[u.uid], folder / fn)
                    cp["tables"][u.uid] = fn
                    cp["roles"][u.uid] = f"{st.name}/{b.kind}/{u.semantics}"
        path = folder / "manifest.txt"
        with open(path, "w") as f:
            cp.write(f)
        return path

    @classmethod
    def load(cls, manifest, verify: bool = True) -> "DnLUT":
        path = Path(manifest)
        if path.is_dir():
            path = path / "manifest.txt"
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        if not cp.read(path):
            raise FileNotFoundError(f"cannot read manifest {path}")
        try:
            m = cp["manifest"]
            if m.get("format") != MANIFEST_FORMAT:
                raise ConfigError(f"unknown manifest format {m.get('format')!r}")
            config = PipelineConfig.from_text((path.parent / m["config"]).read_text())
            tables = {uid: load_table(path.parent / fn) for uid, fn in cp["tables"].items()}
        except KeyError as e:
            raise ConfigError(f"manifest {path} lacks {e}") from None
        lut = cls(config, tables)
        if verify and m.get("hash") and m["hash"] != lut.hash():
            raise ConfigError(f"manifest hash mismatch for {path}")
        return lut


def convert(net, folder=None) -> DnLUT:
    """Bake every unit of a float pipeline; optionally write tables and manifest."""
    tables = {}
    for u in net.config.units():
        unit = net.units[u.uid]
        if unit.arity > 4:
            raise ConfigError(f"unit {u.uid} has arity {unit.arity}; tables stop at 4D")
        tables[u.uid] = bake(unit, table_id=u.uid)
    lut = DnLUT(net.config, tables)
    if folder is not None:
        lut.save(folder)
    return lut


def run(pipeline, img):
    """Denoise an (H, W, 3) uint8 image (or ImageU8) with a DnLUT or DnNet."""
    from ..imageio import ImageU8, as_array
    a = as_array(img)
    out = pipeline.run_array(a)
    return ImageU8.from_array(out) if isinstance(img, ImageU8) else out
