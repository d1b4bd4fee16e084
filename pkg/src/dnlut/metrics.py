"""CPSNR and SSIM on 8-bit RGB images."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .imageio import as_array

K1, K2 = 0.01, 0.03
WIN, WIN_SIGMA = 11, 1.5


def _pair(a, b):
    a = as_array(a).astype(np.float64)
    b = as_array(b).astype(np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def cpsnr(a, b) -> float:
    """PSNR with the MSE pooled over all channels; identical images give +inf."""
    a, b = _pair(a, b)
    mse = float(np.mean(np.square(a - b)))
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(255.0 ** 2 / mse)


def gaussian_window(size=WIN, sigma=WIN_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-x ** 2 / (2 * sigma ** 2))
    return g / g.sum()


def _filter_valid(x, g):
    # separable, valid region only
    k = len(g)
    x = sliding_window_view(x, k, axis=0) @ g
    return sliding_window_view(x, k, axis=1) @ g


def ssim_channel(a, b, data_range=255.0) -> float:
    g = gaussian_window()
    c1 = (K1 * data_range) ** 2
    c2 = (K2 * data_range) ** 2
    mu_a = _filter_valid(a, g)
    mu_b = _filter_valid(b, g)
    # unbiased local variances, as in the usual reference implementation
    n = WIN * WIN
    cov = n / (n - 1)
    va = cov * (_filter_valid(a * a, g) - mu_a ** 2)
    vb = cov * (_filter_valid(b * b, g) - mu_b ** 2)
    vab = cov * (_filter_valid(a * b, g) - mu_a * mu_b)
    num = (2 * mu_a * mu_b + c1) * (2 * vab + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (va + vb + c2)
    return float(np.mean(num / den))


def ssim(a, b) -> float:
    """Single-scale SSIM, 11x11 Gaussian window (sigma 1.5), averaged over channels."""
    a, b = _pair(a, b)
    if min(a.shape[0], a.shape[1]) < WIN:
        raise ValueError(f"SSIM needs both sides >= {WIN}")
    if np.array_equal(a, b):
        return 1.0
    return float(np.mean([ssim_channel(a[..., c], b[..., c]) for c in range(a.shape[2])]))


@dataclass
class MetricReport:
    cpsnr_db: float
    ssim: float
    per_image: list = field(default_factory=list)


def evaluate(pairs, names=None) -> MetricReport:
    """Average CPSNR / SSIM over (reference, test) pairs, accumulated in order."""
    rows = []
    for i, (ref, test) in enumerate(pairs):
        rows.append({"name": names[i] if names else str(i), "cpsnr_db": cpsnr(ref, test), "ssim": ssim(ref, test)})
    if not rows:
        return MetricReport(math.nan, math.nan, [])
    return MetricReport(float(np.mean([r["cpsnr_db"] for r in rows])),
                        float(np.mean([r["ssim"] for r in rows])), rows)
