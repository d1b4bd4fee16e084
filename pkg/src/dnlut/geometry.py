"""Kernel footprints, their rotation-ensemble orbits, and table storage accounting."""
from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .lut import human_bytes, table_bytes

MAX_WINDOW = 5


@dataclass(frozen=True)
class KernelPattern:
    taps: tuple
    depth: int = 1
    name: str = ""

    def __post_init__(self):
        taps = tuple(sorted({(int(dy), int(dx)) for dy, dx in self.taps}))
        object.__setattr__(self, "taps", taps)
        if (0, 0) not in taps:
            raise ValueError(f"pattern {self.name or taps} must contain the anchor (0, 0)")
        if self.depth < 1:
            raise ValueError("depth must be positive")
        r = MAX_WINDOW // 2
        if any(abs(dy) > r or abs(dx) > r for dy, dx in taps):
            raise ValueError(f"taps must stay within the {MAX_WINDOW}x{MAX_WINDOW} analysis window")

    @property
    def index_dims(self) -> int:
        return len(self.taps) * self.depth

    @property
    def bakeable(self) -> bool:
        return self.index_dims <= 4


L_SHAPE = KernelPattern(((0, 0), (0, 1), (1, 1)), 1, "L")
SQUARE_2X2 = KernelPattern(((0, 0), (0, 1), (1, 0), (1, 1)), 1, "S")
PCM_1X2 = KernelPattern(((0, 0), (0, 1)), 2, "PCM")
POINT = KernelPattern(((0, 0),), 1, "1x1")


def rotate_offset(dy: int, dx: int, quarter_turns: int):
    for _ in range(quarter_turns % 4):
        dy, dx = dx, -dy
    return dy, dx


def rotate_pattern(p: KernelPattern, quarter_turns: int) -> KernelPattern:
    """Quarter-turn rotation about the anchor, mapping (y, x) -> (x, -y) per turn."""
    return KernelPattern(tuple(rotate_offset(dy, dx, quarter_turns) for dy, dx in p.taps), p.depth, p.name)


@dataclass
class OrbitReport:
    coverage: dict
    rf_extent: tuple  # ((ymin, xmin), (ymax, xmax))
    non_overlapping: bool

    @property
    def rf_size(self):
        (y0, x0), (y1, x1) = self.rf_extent
        return y1 - y0 + 1, x1 - x0 + 1

    @property
    def total(self) -> int:
        return sum(self.coverage.values())

    def grid(self, window: Optional[int] = None) -> np.ndarray:
        """Counts laid out on a centred window (default: smallest odd square holding the RF)."""
        if window is None:
            (y0, x0), (y1, x1) = self.rf_extent
            window = 2 * max(abs(y0), abs(x0), abs(y1), abs(x1)) + 1
        r = window // 2
        g = np.zeros((window, window), dtype=np.int64)
        for (dy, dx), n in self.coverage.items():
            g[dy + r, dx + r] = n
        return g


def orbit_analysis(p: KernelPattern) -> OrbitReport:
    cov: dict = {}
    for r in range(4):
        for t in rotate_pattern(p, r).taps:
            cov[t] = cov.get(t, 0) + 1
    ys = [t[0] for t in cov]
    xs = [t[1] for t in cov]
    non_overlapping = all(n <= 1 for t, n in cov.items() if t != (0, 0))
    return OrbitReport(dict(sorted(cov.items())), ((min(ys), min(xs)), (max(ys), max(xs))), non_overlapping)


def find_nonoverlapping(n: int, window: int = 3) -> list:
    """Every n-tap pattern inside a centred ``window`` whose rotation orbits never overlap."""
    if n < 1:
        raise ValueError("tap count must be positive")
    if window % 2 == 0 or window > MAX_WINDOW:
        raise ValueError(f"window must be odd and at most {MAX_WINDOW}")
    r = window // 2
    cells = [(dy, dx) for dy in range(-r, r + 1) for dx in range(-r, r + 1) if (dy, dx) != (0, 0)]
    found = []
    for extra in itertools.combinations(cells, n - 1):
        p = KernelPattern(((0, 0),) + extra)
        if orbit_analysis(p).non_overlapping:
            found.append(p)
    return found


def format_grid(report: OrbitReport, fmt: str = "text", window: Optional[int] = None) -> str:
    """Lookup-frequency table with dy rows and dx columns, as text or CSV."""
    g = report.grid(window)
    r = g.shape[0] // 2
    offs = list(range(-r, r + 1))
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["dy\\dx"] + offs)
        for dy, row in zip(offs, g):
            w.writerow([dy] + [int(v) for v in row])
        return buf.getvalue()
    if fmt != "text":
        raise ValueError(f"unknown format {fmt!r}")
    lines = ["dy\\dx " + " ".join(f"{o:>3d}" for o in offs)]
    for dy, row in zip(offs, g):
        lines.append(f"{dy:>5d} " + " ".join(f"{int(v):>3d}" if v else "  ." for v in row))
    return "\n".join(lines) + "\n"


# --- storage ---------------------------------------------------------------

@dataclass
class TableRow:
    id: str
    kind: str
    dims: int
    out_slots: int
    bytes: int


@dataclass
class StorageReport:
    rows: list = field(default_factory=list)

    @property
    def total(self) -> int:
        return sum(r.bytes for r in self.rows)

    @property
    def l_to_s_delta(self) -> int:
        """Extra bytes if every L-shaped (3D) table were replaced by a 2x2 (4D) one."""
        return sum(r.bytes * 16 for r in self.rows if r.kind == "l-shaped")

    def text(self) -> str:
        lines = [f"{'table':<16} {'kind':<13} {'dims':>4} {'slots':>5} {'bytes':>12}  human"]
        for r in self.rows:
            lines.append(f"{r.id:<16} {r.kind:<13} {r.dims:>4} {r.out_slots:>5} {r.bytes:>12}  {human_bytes(r.bytes)}")
        lines.append(f"{'total':<16} {'':<13} {'':>4} {'':>5} {self.total:>12}  {human_bytes(self.total)}")
        lines.append(f"L->2x2 swap would add {self.l_to_s_delta} B ({human_bytes(self.l_to_s_delta)})")
        return "\n".join(lines) + "\n"

    def as_dict(self) -> dict:
        return {"tables": [vars(r) for r in self.rows], "total": self.total,
                "total_human": human_bytes(self.total), "l_to_s_delta": self.l_to_s_delta}


def storage_report(pipeline) -> StorageReport:
    """Per-table bytes (17^dims x slots) for a PipelineConfig or any iterable of unit specs."""
    units = pipeline.units() if hasattr(pipeline, "units") else list(pipeline or [])
    return StorageReport([TableRow(u.uid, u.head_kind, u.dims, u.out_slots, table_bytes(u.dims, u.out_slots))
                          for u in units])


def swap_l_for_square(unit):
    """The same unit re-footprinted on a 2x2 square (what the L shape replaces)."""
    if unit.head_kind != "l-shaped":
        raise ValueError(f"unit {unit.uid} is not L-shaped")
    c = unit.taps[0][2]
    return replace(unit, head_kind="square", taps=((0, 0, c), (0, 1, c), (1, 0, c), (1, 1, c)))
