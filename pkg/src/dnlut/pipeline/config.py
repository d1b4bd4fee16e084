"""Declarative description of a DnNet / DnLUT graph.

A pipeline is an ordered list of stages.  Each stage holds one or more blocks:

``pcm``
    Pairwise channel mixer: three 4-input units (RG, GB, BR) reading a 1x2
    footprint on two channels; emits 3 channels.
``l-shaped``
    One 3-input unit on the L footprint, weights shared across channels;
    emits as many channels as it reads.
``fusion``
    Pointwise channel groups of 3 or 4 channels each; every group predicts
    ``out`` channels and the groups are averaged.

Stage outputs are always quantized to 8 bits.  A stage with ``residual_from``
set adds its (signed) output to the input of that earlier stage and clamps.
"""
from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, replace
from typing import Optional

BLOCK_KINDS = ("pcm", "l-shaped", "fusion")
COMBINES = ("concat", "sum", "average")
PAIR_NAMES = ("RG", "GB", "BR")
L_TAPS = ((0, 0, 0), (0, 1, 0), (1, 1, 0))


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class UnitSpec:
    """One LUT-convertible unit: what it reads and how many slots it writes."""

    uid: str
    head_kind: str
    taps: tuple
    out_slots: int
    semantics: str
    skip: Optional[tuple]

    @property
    def dims(self) -> int:
        return len(self.taps)


@dataclass(frozen=True)
class BlockSpec:
    name: str
    kind: str
    groups: tuple = ()
    out: int = 3
    skip: bool = True

    def __post_init__(self):
        if self.kind not in BLOCK_KINDS:
            raise ConfigError(f"block {self.name}: unknown kind {self.kind!r}")
        if self.kind == "fusion":
            if not self.groups:
                raise ConfigError(f"fusion block {self.name} needs channel groups")
            for g in self.groups:
                if not 3 <= len(g) <= 4:
                    raise ConfigError(f"fusion block {self.name}: group {g} must hold 3 or 4 channels")

    def units(self, semantics: str) -> list:
        use_skip = self.skip and semantics != "residual"
        if self.kind == "pcm":
            out = []
            for c, name in enumerate(PAIR_NAMES):
                c2 = (c + 1) % 3
                taps = ((0, 0, c), (0, 1, c), (0, 0, c2), (0, 1, c2))
                out.append(UnitSpec(f"{self.name}_{name}", "pcm-head", taps, 1, semantics,
                                    (0,) if use_skip else None))
            return out
        if self.kind == "l-shaped":
            return [UnitSpec(self.name, "l-shaped", L_TAPS, 1, semantics, (0,) if use_skip else None)]
        out = []
        for i, g in enumerate(self.groups):
            taps = tuple((0, 0, c) for c in g)
            skip = None
            if use_skip:
                # slot k passes through the first tap that carries colour k
                skip = tuple(next((j for j, c in enumerate(g) if c % self.out == k), None)
                             for k in range(self.out))
            out.append(UnitSpec(f"{self.name}_g{i}", "fusion-group", taps, self.out, semantics, skip))
        return out

    def out_channels(self, cin: int) -> int:
        if self.kind == "pcm":
            return 3
        if self.kind == "l-shaped":
            return cin
        return self.out


@dataclass(frozen=True)
class StageSpec:
    name: str
    blocks: tuple
    combine: str = "concat"
    ensemble: bool = True
    residual_from: Optional[int] = None

    def __post_init__(self):
        if not self.blocks:
            raise ConfigError(f"stage {self.name} has no blocks")
        if self.combine not in COMBINES:
            raise ConfigError(f"stage {self.name}: unknown combine {self.combine!r}")

    @property
    def semantics(self) -> str:
        return "residual" if self.residual_from is not None else "feature"

    def units(self) -> list:
        return [u for b in self.blocks for u in b.units(self.semantics)]


@dataclass(frozen=True)
class PipelineConfig:
    name: str
    stages: tuple
    mode: str = "float"
    hidden: int = 16
    depth: int = 3
    in_channels: int = 3

    def __post_init__(self):
        if self.mode not in ("float", "lut"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        self.channel_plan()

    def units(self) -> list:
        return [u for s in self.stages for u in s.units()]

    def unit_ids(self) -> list:
        return [u.uid for u in self.units()]

    def channel_plan(self) -> list:
        """Input/output channel count of every stage; raises ConfigError on any mismatch."""
        if not self.stages:
            raise ConfigError("pipeline has no stages")
        plan = []
        cin = self.in_channels
        stage_inputs = []
        seen = set()
        for i, st in enumerate(self.stages):
            stage_inputs.append(cin)
            outs = []
            for b in st.blocks:
                if b.name in seen:
                    raise ConfigError(f"block name {b.name} used twice")
                seen.add(b.name)
                if b.kind == "pcm" and cin != 3:
                    raise ConfigError(f"stage {st.name}: pcm block {b.name} needs 3 input channels, got {cin}")
                if b.kind == "fusion":
                    used = set()
                    for g in b.groups:
                        for c in g:
                            if not 0 <= c < cin:
                                raise ConfigError(f"stage {st.name}: fusion channel {c} outside 0..{cin - 1}")
                            used.add(c)
                    if used != set(range(cin)):
                        raise ConfigError(f"stage {st.name}: fusion groups leave channels {sorted(set(range(cin)) - used)} unread")
                outs.append(b.out_channels(cin))
            for u in st.units():
                if u.dims > 4:
                    raise ConfigError(f"unit {u.uid} indexes {u.dims} dims; at most 4 are bakeable")
            if st.combine == "concat":
                cout = sum(outs)
            else:
                if len(set(outs)) != 1:
                    raise ConfigError(f"stage {st.name}: {st.combine} needs equal block widths, got {outs}")
                cout = outs[0]
            if st.residual_from is not None:
                if not 0 <= st.residual_from <= i:
                    raise ConfigError(f"stage {st.name}: residual_from={st.residual_from} must name this or an earlier stage")
                if stage_inputs[st.residual_from] != cout:
                    raise ConfigError(f"stage {st.name}: residual of {cout} channels cannot add to {stage_inputs[st.residual_from]} channels")
            plan.append((cin, cout))
            cin = cout
        if cin != 3:
            raise ConfigError(f"pipeline must end with 3 channels, ends with {cin}")
        return plan

    # --- text form ---------------------------------------------------------

    def to_parser(self) -> configparser.ConfigParser:
        cp = configparser.ConfigParser(interpolation=None)
        cp["pipeline"] = {
            "name": self.name,
            "stages": " ".join(s.name for s in self.stages),
            "mode": self.mode,
            "hidden": str(self.hidden),
            "depth": str(self.depth),
        }
        for s in self.stages:
            sec = {
                "blocks": " ".join(b.name for b in s.blocks),
                "combine": s.combine,
                "ensemble": "true" if s.ensemble else "false",
            }
            if s.residual_from is not None:
                sec["residual_from"] = str(s.residual_from)
            cp[f"stage {s.name}"] = sec
            for b in s.blocks:
                bs = {"kind": b.kind, "skip": "true" if b.skip else "false"}
                if b.kind == "fusion":
                    bs["groups"] = ", ".join(" ".join(str(c) for c in g) for g in b.groups)
                    bs["out"] = str(b.out)
                cp[f"block {b.name}"] = bs
        return cp

    def to_text(self) -> str:
        buf = io.StringIO()
        self.to_parser().write(buf)
        return buf.getvalue()

    @classmethod
    def from_parser(cls, cp: configparser.ConfigParser) -> "PipelineConfig":
        try:
            p = cp["pipeline"]
            stages = []
            for sname in p["stages"].split():
                ss = cp[f"stage {sname}"]
                blocks = []
                for bname in ss["blocks"].split():
                    bs = cp[f"block {bname}"]
                    groups = ()
                    if bs.get("groups"):
                        groups = tuple(tuple(int(c) for c in g.split()) for g in bs["groups"].split(","))
                    blocks.append(BlockSpec(bname, bs["kind"], groups, int(bs.get("out", 3)),
                                            bs.getboolean("skip", True)))
                rf = ss.get("residual_from")
                stages.append(StageSpec(sname, tuple(blocks), ss.get("combine", "concat"),
                                        ss.getboolean("ensemble", True), None if rf is None else int(rf)))
            return cls(p.get("name", "pipeline"), tuple(stages), p.get("mode", "float"),
                       int(p.get("hidden", 16)), int(p.get("depth", 3)))
        except KeyError as e:
            raise ConfigError(f"missing config section or key: {e}") from None
        except ValueError as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(str(e)) from None

    @classmethod
    def from_text(cls, text: str) -> "PipelineConfig":
        cp = configparser.ConfigParser(interpolation=None)
        try:
            cp.read_string(text)
        except configparser.Error as e:
            raise ConfigError(f"unreadable config: {e}") from None
        return cls.from_parser(cp)

    def with_mode(self, mode: str) -> "PipelineConfig":
        return replace(self, mode=mode)


# --- stock topologies ------------------------------------------------------

def reference_config(hidden: int = 16, depth: int = 3) -> PipelineConfig:
    """Two PCM + L stages joined by a grouped channel fusion; the second stage predicts a residual."""
    s1 = StageSpec("s1", (BlockSpec("s1_pcm", "pcm"), BlockSpec("s1_l", "l-shaped")), "concat", True)
    fuse = StageSpec("fuse", (BlockSpec("fuse", "fusion", ((0, 1, 2, 3), (4, 5, 0, 1)), 3),), "average", False)
    s2 = StageSpec("s2", (BlockSpec("s2_pcm", "pcm"), BlockSpec("s2_l", "l-shaped")), "average", True, 0)
    return PipelineConfig("dnlut-reference", (s1, fuse, s2), hidden=hidden, depth=depth)


def spatial_config(n_stages: int = 2, hidden: int = 16, depth: int = 3) -> PipelineConfig:
    """L-shaped-only baseline: per-channel spatial stages, the last one residual."""
    stages = []
    for i in range(n_stages):
        last = i == n_stages - 1
        stages.append(StageSpec(f"sp{i + 1}", (BlockSpec(f"sp{i + 1}_l", "l-shaped"),), "concat", True,
                                0 if last else None))
    return PipelineConfig("spatial-l", tuple(stages), hidden=hidden, depth=depth)


def pcm_stage(name: str = "plug") -> StageSpec:
    return StageSpec(name, (BlockSpec(f"{name}_pcm", "pcm"),), "concat", True, 0)


def pcm_plugin(base: PipelineConfig, name: str = "plug") -> PipelineConfig:
    """Prepend a rotation-ensembled PCM stage; the base stages are kept as they are.

    The PCM stage predicts a residual on the input image, so an untrained plug-in
    starts out close to the identity.  Base residual stages are re-pointed so they keep
    adding to *their own* input, which is now the PCM output.
    """
    for s in base.stages:
        for b in s.blocks:
            if b.kind != "l-shaped":
                raise ConfigError(f"pcm_plugin expects a spatial-only base; block {b.name} is {b.kind}")
    shifted = tuple(replace(s, residual_from=None if s.residual_from is None else s.residual_from + 1)
                    for s in base.stages)
    return replace(base, name=f"pcm+{base.name}", stages=(pcm_stage(name),) + shifted)
