import numpy as np


def round_half_away(x):
    """Round to nearest integer, ties away from zero (numpy's ``round`` ties to even)."""
    x = np.asarray(x)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def div_round(num, den: int):
    """Integer ``num / den`` rounded half away from zero, in exact integer arithmetic."""
    num = np.asarray(num, dtype=np.int64)
    q = (np.abs(num) * 2 + den) // (2 * den)
    return np.where(num < 0, -q, q)


def rot_cw(x: np.ndarray, r: int) -> np.ndarray:
    """Rotate the last two axes clockwise by ``r`` quarter turns."""
    return np.rot90(x, -r, axes=(-2, -1)) if r % 4 else x


def rot_ccw(x: np.ndarray, r: int) -> np.ndarray:
    return np.rot90(x, r, axes=(-2, -1)) if r % 4 else x
