"""Desk-scale experiments shared by the acceptance tests and scripts/."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .data import PatchStream, default_stream, heldout_set, shipped_images, synthetic_texture, validation_batches
from .finetune import finetune
from .metrics import cpsnr
from .micronet.optim import TrainConfig
from .pipeline.config import pcm_plugin, reference_config, spatial_config
from .pipeline.dnnet import DnNet
from .pipeline.lutmode import convert
from .train import train

log = logging.getLogger(__name__)

DESK = TrainConfig(iterations=20_000, batch_size=12, lr_max=1e-3, lr_min=1e-5, seed=0, sigma=25.0, patch_size=16)


def mean_cpsnr(model, pairs) -> float:
    return float(np.mean([cpsnr(clean, model.run_array(noisy)) for clean, noisy in pairs]))


@dataclass
class DenoiseRun:
    noisy_db: float
    lut_db: float
    finetuned_db: float
    float_db: float
    final_loss: float
    seconds: dict = field(default_factory=dict)
    finetune_history: list = field(default_factory=list)
    net: object = field(default=None, repr=False, compare=False)
    lut: object = field(default=None, repr=False, compare=False)
    finetuned: object = field(default=None, repr=False, compare=False)

    @property
    def gain_db(self) -> float:
        return self.lut_db - self.noisy_db


def desk_denoise(cfg: TrainConfig = DESK, finetune_iters: int = 2000, log_every: int = 0) -> DenoiseRun:
    """Train the reference topology, bake it, fine-tune the tables, score the held-out set."""
    t0 = time.perf_counter()
    stream = default_stream(cfg)
    res = train(reference_config(), stream, cfg, log_every=log_every)
    t1 = time.perf_counter()
    lut = convert(res.net)
    pairs = heldout_set(cfg.sigma)
    noisy_db = float(np.mean([cpsnr(c, n) for c, n in pairs]))
    lut_db = mean_cpsnr(lut, pairs)
    float_db = mean_cpsnr(res.net, pairs)
    t2 = time.perf_counter()
    ft = finetune(lut, stream, finetune_iters, validation=validation_batches(cfg.sigma), log_every=log_every)
    t3 = time.perf_counter()
    ft_db = mean_cpsnr(ft.lut, pairs)
    secs = {"train": t1 - t0, "convert+eval": t2 - t1, "finetune": t3 - t2, "total": time.perf_counter() - t0}
    return DenoiseRun(noisy_db, lut_db, ft_db, float_db, res.final_loss, secs, ft.history, res.net, lut, ft.lut)


@dataclass
class PluginRun:
    base_db: float
    plugged_db: float
    noisy_db: float
    base_identical: bool
    seconds: float

    @property
    def gain_db(self) -> float:
        return self.plugged_db - self.base_db


PLUGIN_RHO = 0.5


def plugin_experiment(base_iters: int = 4000, plug_iters: int = 4000, sigma: float = 25.0, rho: float = PLUGIN_RHO,
                      seed: int = 0, patch: int = 16) -> PluginRun:
    """Train an L-only pipeline, then train a PCM stage in front of it with the base frozen.

    Both are scored in table mode on held-out images under channel-correlated noise.
    """
    t0 = time.perf_counter()
    imgs = shipped_images("train") + [synthetic_texture(1000 + i) for i in range(4)]
    base_cfg = spatial_config()
    tc = TrainConfig(iterations=base_iters, seed=seed, sigma=sigma, patch_size=patch)
    stream = PatchStream(imgs, patch, tc.batch_size, sigma, seed, rho)
    base = train(base_cfg, stream, tc).net
    base_lut = convert(base)

    plug_cfg = pcm_plugin(base_cfg)
    plugged = DnNet.extend(plug_cfg, base, seed + 1)
    frozen = {uid: [p.copy() for p in base.units[uid].params()] for uid in base.units}
    plug_ids = [u.uid for u in plug_cfg.stages[0].units()]
    tp = TrainConfig(iterations=plug_iters, seed=seed + 1, sigma=sigma, patch_size=patch)
    stream2 = PatchStream(imgs, patch, tp.batch_size, sigma, seed + 1, rho)
    train(plug_cfg, stream2, tp, net=plugged, trainable=plug_ids)
    plug_lut = convert(plugged)

    identical = all(np.array_equal(a, b) for uid in base.units for a, b in zip(frozen[uid], base.units[uid].params())) \
        and all(np.array_equal(base_lut.tables[u].entries, plug_lut.tables[u].entries) for u in base_lut.tables)
    pairs = heldout_set(sigma, rho=rho)
    return PluginRun(mean_cpsnr(base_lut, pairs), mean_cpsnr(plug_lut, pairs),
                     float(np.mean([cpsnr(c, n) for c, n in pairs])), identical, time.perf_counter() - t0)
