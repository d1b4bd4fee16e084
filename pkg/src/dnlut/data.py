"""Training data: shipped images, synthetic textures, and a seeded patch stream."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .imageio import load_folder, list_pngs
from .noise import box_muller
from .numeric import round_half_away

IMAGE_DIR = Path(__file__).resolve().parent / "images"


def shipped_images(split: str = "train") -> list:
    if split not in ("train", "val", "heldout"):
        raise ValueError("split is 'train', 'val' or 'heldout'")
    return load_folder(IMAGE_DIR / split)


def shipped_names(split: str = "train") -> list:
    return [p.stem for p in list_pngs(IMAGE_DIR / split)]


def synthetic_texture(seed: int, size: int = 128) -> np.ndarray:
    """Smooth colour gradients, a few edges and some band-limited texture."""
    rng = np.random.default_rng(seed)
    y, x = np.mgrid[0:size, 0:size] / size
    img = np.zeros((size, size, 3))
    for c in range(3):
        a, b, p = rng.uniform(-1, 1, 3)
        img[..., c] = 0.5 + 0.25 * np.sin(2 * np.pi * (a * x + b * y) + p * np.pi)
    for _ in range(rng.integers(2, 6)):
        nx, ny = rng.normal(size=2)
        off = rng.uniform(-0.5, 0.5)
        mask = (nx * (x - 0.5) + ny * (y - 0.5)) > off
        img[mask] += rng.uniform(-0.3, 0.3, 3)
    # low-pass noise texture, same for all channels with a random tint
    t = rng.normal(size=(size // 4 + 1, size // 4 + 1))
    t = np.kron(t, np.ones((4, 4)))[:size, :size]
    img += 0.05 * t[..., None] * rng.uniform(0.5, 1.5, 3)
    return np.clip(np.rint(img * 255), 0, 255).astype(np.uint8)


@dataclass
class PatchStream:
    """Deterministic (noisy, clean) batches in normalized NCHW float32.

    Batch ``t`` depends only on ``(seed, t)``, so a stream can be resumed or
    replayed independently of how many batches were drawn before.
    """

    images: list
    patch_size: int = 16
    batch_size: int = 12
    sigma: float = 25.0
    seed: int = 0
    rho: float = 0.0

    def __post_init__(self):
        if not self.images:
            raise ValueError("patch stream needs at least one image")
        for im in self.images:
            if im.shape[0] < self.patch_size or im.shape[1] < self.patch_size:
                raise ValueError(f"image {im.shape} smaller than patch {self.patch_size}")
        self._clean = [im.astype(np.float32) for im in self.images]

    def batch(self, t: int):
        rng = np.random.Generator(np.random.PCG64([self.seed, t]))
        p = self.patch_size
        out = np.empty((self.batch_size, p, p, 3), np.float32)
        for i in range(self.batch_size):
            im = self._clean[rng.integers(len(self._clean))]
            y = rng.integers(im.shape[0] - p + 1)
            x = rng.integers(im.shape[1] - p + 1)
            patch = im[y:y + p, x:x + p]
            patch = np.rot90(patch, rng.integers(4))
            if rng.integers(2):
                patch = patch[:, ::-1]
            out[i] = patch
        noise = box_muller(rng, out.size).reshape(out.shape)
        if self.rho:
            shared = box_muller(rng, out.size // 3).reshape(out.shape[:-1] + (1,))
            noise = np.sqrt(self.rho) * shared + np.sqrt(1 - self.rho) * noise
        noisy = np.clip(round_half_away(out + self.sigma * noise), 0, 255)
        f = np.float32(255.0)
        return (noisy.transpose(0, 3, 1, 2) / f).astype(np.float32), (out.transpose(0, 3, 1, 2) / f).astype(np.float32)


def default_stream(cfg, rho: float = 0.0, extra_textures: int = 4) -> PatchStream:
    imgs = shipped_images("train") + [synthetic_texture(1000 + i) for i in range(extra_textures)]
    return PatchStream(imgs, cfg.patch_size, cfg.batch_size, cfg.sigma, cfg.seed, rho)


def heldout_set(sigma: float = 25.0, seed: int = 1234, rho: float = 0.0, images: Optional[list] = None):
    """(clean, noisy) uint8 pairs for evaluation, noise drawn with the documented sampler."""
    from .noise import NoiseSpec, add_noise
    imgs = shipped_images("heldout") if images is None else images
    pairs = []
    for i, im in enumerate(imgs):
        spec = NoiseSpec(sigma, seed + i, rho == 0.0, rho)
        pairs.append((im, add_noise(im, spec)))
    return pairs


def validation_batches(sigma: float = 25.0, seed: int = 4321, rho: float = 0.0) -> list:
    """Noisy/clean byte batches (NCHW, one image each) of the shipped validation crops."""
    return [(noisy.transpose(2, 0, 1)[None], clean.transpose(2, 0, 1)[None])
            for clean, noisy in heldout_set(sigma, seed, rho, shipped_images("val"))]
