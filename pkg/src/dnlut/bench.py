"""Benchmark helpers: structural op counts and CPSNR / SSIM over an image set."""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass

import numpy as np

from .metrics import MetricReport, cpsnr, ssim
from .noise import NoiseSpec, add_noise
from .pipeline.config import PipelineConfig
from .pipeline.engine import rotations

MEGAPIXEL = 1_000_000


@dataclass
class OpCount:
    """Per-megapixel work of table-mode inference.

    ``lookups``: table queries (one per unit, rotation and, for L tables,
    channel); ``interels``: entries read (D+1 simplex vertices per slot);
    ``muls``: vertex weightings; ``adds``: vertex sums plus the accumulation
    over rotations, groups and blocks.
    """

    lookups: int
    interels: int
    adds: int
    muls: int


def op_count(pipeline: PipelineConfig) -> OpCount:
    lookups = interels = adds = muls = 0
    plan = pipeline.channel_plan()
    for st, (cin, cout) in zip(pipeline.stages, plan):
        r = len(rotations(st))
        outputs = 0
        for b in st.blocks:
            for u in b.units(st.semantics):
                n = r * (cin if b.kind == "l-shaped" else 1)
                slots = u.out_slots * (cin if b.kind == "l-shaped" else 1)
                lookups += n
                interels += r * slots * (u.dims + 1)
                muls += r * slots * (u.dims + 1)
                adds += r * slots * u.dims
                outputs += r * slots
        adds += outputs - cout  # folding rotations/groups/blocks down to the stage output
        if st.residual_from is not None:
            adds += cout
    return OpCount(lookups * MEGAPIXEL, interels * MEGAPIXEL, adds * MEGAPIXEL, muls * MEGAPIXEL)


def bench(model, images, sigma: float = 25.0, seed: int = 0, rho: float = 0.0, names=None) -> dict:
    """Noisy-input and denoised metrics for clean ``images`` under seeded noise."""
    noisy_rows, out_rows = [], []
    t0 = time.perf_counter()
    for i, clean in enumerate(images):
        spec = NoiseSpec(sigma, seed + i, rho == 0.0, rho)
        noisy = add_noise(clean, spec)
        name = names[i] if names else str(i)
        noisy_rows.append({"name": name, "cpsnr_db": cpsnr(clean, noisy), "ssim": ssim(clean, noisy)})
        if model is not None:
            out = model.run_array(noisy)
            out_rows.append({"name": name, "cpsnr_db": cpsnr(clean, out), "ssim": ssim(clean, out)})
    elapsed = time.perf_counter() - t0

    def summary(rows):
        return asdict(MetricReport(float(np.mean([r["cpsnr_db"] for r in rows])),
                                   float(np.mean([r["ssim"] for r in rows])), rows))

    report = {"sigma": sigma, "seed": seed, "rho": rho, "images": len(images), "noisy": summary(noisy_rows),
              "seconds": elapsed}
    if model is not None:
        report["denoised"] = summary(out_rows)
        report["gain_db"] = report["denoised"]["cpsnr_db"] - report["noisy"]["cpsnr_db"]
        report["ops_per_megapixel"] = asdict(op_count(model.config))
    return report
