"""8-bit RGB images and PNG I/O."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image


class ImageIOError(OSError):
    pass


@dataclass
class ImageU8:
    """Interleaved RGB bytes, row-major."""

    width: int
    height: int
    data: bytes

    def __post_init__(self):
        if len(self.data) != 3 * self.width * self.height:
            raise ValueError(f"buffer holds {len(self.data)} bytes, expected {3 * self.width * self.height}")

    @classmethod
    def from_array(cls, a: np.ndarray) -> "ImageU8":
        a = np.asarray(a)
        if a.ndim != 3 or a.shape[2] != 3 or a.dtype != np.uint8:
            raise ValueError(f"expected (H, W, 3) uint8, got {a.shape} {a.dtype}")
        return cls(a.shape[1], a.shape[0], np.ascontiguousarray(a).tobytes())

    def array(self) -> np.ndarray:
        return np.frombuffer(self.data, dtype=np.uint8).reshape(self.height, self.width, 3).copy()


def as_array(img) -> np.ndarray:
    return img.array() if isinstance(img, ImageU8) else np.asarray(img)


def read_png(path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()
    except (OSError, ValueError) as e:
        raise ImageIOError(f"cannot read image {path}: {e}") from None


def write_png(path, img) -> None:
    a = as_array(img)
    try:
        Image.fromarray(a, "RGB").save(path, format="PNG")
    except (OSError, ValueError) as e:
        raise ImageIOError(f"cannot write image {path}: {e}") from None


def list_pngs(folder) -> list:
    p = Path(folder)
    if not p.is_dir():
        raise ImageIOError(f"not a directory: {folder}")
    files = sorted(f for f in p.iterdir() if f.suffix.lower() == ".png")
    if not files:
        raise ImageIOError(f"no PNG images in {folder}")
    return files


def load_folder(folder) -> list:
    return [read_png(f) for f in list_pngs(folder)]
