"""Training loop: MSE on (noisy, clean) patches, Adam with a cosine-annealed rate."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .micronet.optim import Adam, TrainConfig, cosine_lr
from .micronet.tensor import mse_loss
from .pipeline.config import PipelineConfig
from .pipeline.dnnet import DnNet

log = logging.getLogger(__name__)


class DivergenceError(FloatingPointError):
    pass


@dataclass
class TrainResult:
    net: DnNet
    losses: list = field(default_factory=list)
    skipped: int = 0
    aborted: bool = False

    @property
    def final_loss(self) -> float:
        return self.losses[-1] if self.losses else math.nan


def train(pipeline: PipelineConfig, data, cfg: TrainConfig, net: Optional[DnNet] = None,
          trainable=None, checkpoint: Optional[str] = None, log_every: int = 0) -> TrainResult:
    """Fit ``pipeline`` on ``data.batch(t)`` for t = 1..iterations.

    ``trainable`` restricts updates to a subset of unit ids (the rest stay
    frozen).  A non-finite loss stops training, restores the last good weights
    and, if ``checkpoint`` is given, writes them there; the result is flagged
    ``aborted``.
    """
    net = DnNet.build(pipeline, cfg.seed) if net is None else net
    ids = pipeline.unit_ids() if trainable is None else [u for u in pipeline.unit_ids() if u in set(trainable)]
    if not ids:
        raise ValueError("nothing to train")
    units = [net.units[u] for u in ids]
    params = [p for u in units for p in u.params()]
    opt = Adam()
    res = TrainResult(net)
    good = [p.copy() for p in params]
    for t in range(1, cfg.iterations + 1):
        noisy, clean = data.batch(t)
        net.zero_grad()
        pred = net.forward(noisy, train=True)
        loss, g = mse_loss(pred, clean)
        if not math.isfinite(loss):
            for p, v in zip(params, good):
                p[...] = v
            res.aborted = True
            log.warning("loss became non-finite at iteration %d; restored last good weights", t)
            break
        res.losses.append(loss)
        net.backward(g.astype(pred.dtype))
        for p, v in zip(params, good):
            v[...] = p
        if not opt.step(params, [gr for u in units for gr in u.grads()], t, cosine_lr(t, cfg)):
            res.skipped += 1
        if log_every and t % log_every == 0:
            log.info("iter %d  loss %.6f  lr %.2e", t, float(np.mean(res.losses[-log_every:])), cosine_lr(t, cfg))
    if checkpoint:
        net.save(checkpoint)
    return res
