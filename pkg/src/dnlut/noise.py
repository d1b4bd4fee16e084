"""Additive Gaussian noise with a documented, reproducible sample stream.

Stream layout: a PCG64 generator seeded with ``seed`` yields doubles in pairs
``(u1, u2)``; each pair gives two normals by Box-Muller,
``r * cos(2 pi u2)`` then ``r * sin(2 pi u2)`` with ``r = sqrt(-2 ln(1 - u1))``.
Samples fill the image in (row, column, channel) order.  With channel
correlation ``rho > 0`` a second block of ``H*W`` normals (drawn right after
the per-channel block) is shared across the three channels.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imageio import ImageU8, as_array
from .numeric import round_half_away

STREAM = "pcg64-boxmuller-v1"


@dataclass(frozen=True)
class NoiseSpec:
    sigma: float
    seed: int = 0
    per_channel_independent: bool = True
    rho: float = 0.0  # inter-channel correlation when not independent

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError("rho must lie in [0, 1]")
        if self.per_channel_independent and self.rho:
            raise ValueError("rho needs per_channel_independent=False")


def box_muller(rng: np.random.Generator, n: int) -> np.ndarray:
    pairs = (n + 1) // 2
    u = rng.random(2 * pairs).reshape(pairs, 2)
    r = np.sqrt(-2.0 * np.log1p(-u[:, 0]))
    theta = 2.0 * np.pi * u[:, 1]
    z = np.empty((pairs, 2))
    z[:, 0] = r * np.cos(theta)
    z[:, 1] = r * np.sin(theta)
    return z.ravel()[:n]


def gaussian_field(shape, spec: NoiseSpec) -> np.ndarray:
    """Noise of ``shape`` (..., H, W, 3) in 8-bit units."""
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    n = int(np.prod(shape))
    z = box_muller(rng, n).reshape(shape)
    if not spec.per_channel_independent and spec.rho > 0:
        shared = box_muller(rng, n // shape[-1]).reshape(shape[:-1] + (1,))
        z = np.sqrt(spec.rho) * shared + np.sqrt(1.0 - spec.rho) * z
    return spec.sigma * z


def add_noise(img, spec: NoiseSpec):
    """clamp(round(img + N(0, sigma^2)), 0, 255); returns the input's type."""
    a = as_array(img)
    if spec.sigma == 0:
        out = a.copy()
    else:
        out = np.clip(round_half_away(a + gaussian_field(a.shape, spec)), 0, 255).astype(np.uint8)
    return ImageU8.from_array(out) if isinstance(img, ImageU8) else out
