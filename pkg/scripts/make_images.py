"""Regenerate the shipped image set from scikit-image's bundled public-domain / CC0 samples.

Only needed to rebuild src/dnlut/images; the package itself never imports skimage.
"""
import numpy as np
import skimage.data as d
from pathlib import Path

from dnlut.imageio import write_png

OUT = Path(__file__).resolve().parents[1] / "src" / "dnlut" / "images"

# (name, loader, (top, left), size, halve first)
TRAIN = [
    ("astronaut_a", d.astronaut, (0, 0), 192, True),
    ("astronaut_b", d.astronaut, (20, 280), 192, False),
    ("hubble", d.hubble_deep_field, (40, 100), 192, True),
    ("retina", d.retina, (150, 200), 192, True),
]
# disjoint from every training crop; used only to pick fine-tuning checkpoints
VAL = [
    ("astronaut_c", d.astronaut, (384, 0), 128, False),
    ("hubble_b", d.hubble_deep_field, (520, 620), 128, False),
    ("retina_b", d.retina, (820, 820), 128, False),
]
HELDOUT = [
    ("chelsea", d.chelsea, (40, 120), 128, False),
    ("coffee", d.coffee, (20, 80), 128, True),
    ("rocket", d.rocket, (40, 90), 128, True),
    ("ihc", d.immunohistochemistry, (60, 60), 128, True),
]


def halve(a):
    h, w = a.shape[0] // 2 * 2, a.shape[1] // 2 * 2
    a = a[:h, :w].astype(np.float64)
    return np.rint((a[0::2, 0::2] + a[1::2, 0::2] + a[0::2, 1::2] + a[1::2, 1::2]) / 4).astype(np.uint8)


def main():
    for sub, items in (("train", TRAIN), ("val", VAL), ("heldout", HELDOUT)):
        (OUT / sub).mkdir(parents=True, exist_ok=True)
        for name, load, (t, l), s, half in items:
            a = load()[..., :3]
            if half:
                a = halve(a)
            crop = a[t:t + s, l:l + s]
            assert crop.shape == (s, s, 3), (name, crop.shape)
            write_png(OUT / sub / f"{name}.png", crop)
            print(sub, name, crop.shape)


if __name__ == "__main__":
    main()
