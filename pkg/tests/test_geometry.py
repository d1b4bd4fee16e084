import numpy as np
import pytest
from hypothesis import given, strategies as st

from dnlut.geometry import (L_SHAPE, POINT, SQUARE_2X2, KernelPattern, find_nonoverlapping, format_grid,
                            orbit_analysis, rotate_pattern, storage_report, swap_l_for_square)
from dnlut.lut import lut_size_bytes
from dnlut.pipeline.config import BlockSpec, reference_config, spatial_config

NEIGHBOURS = [(dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1) if (dy, dx) != (0, 0)]

offsets = st.tuples(st.integers(-2, 2), st.integers(-2, 2))
patterns = st.lists(offsets, max_size=6).map(lambda t: KernelPattern([(0, 0)] + t))


def brute_orbit(taps):
    """Rotate every tap with an explicit rotation matrix and count hits."""
    rot = np.array([[0, 1], [-1, 0]])  # (y, x) -> (x, -y)
    counts = {}
    for r in range(4):
        m = np.linalg.matrix_power(rot, r)
        for t in taps:
            k = tuple(int(v) for v in m @ np.array(t))
            counts[k] = counts.get(k, 0) + 1
    return counts


def test_rotation_examples():
    p = KernelPattern([(0, 0), (0, 1)])
    assert rotate_pattern(p, 0) == p
    assert set(rotate_pattern(p, 1).taps) == {(0, 0), (1, 0)}
    assert rotate_pattern(p, 4) == p


@given(patterns, st.integers(0, 3))
def test_four_turns_identity_and_composition(p, r):
    assert rotate_pattern(p, 4) == p
    assert rotate_pattern(rotate_pattern(p, r), 4 - r) == p


def test_l_shape_orbit():
    rep = orbit_analysis(L_SHAPE)
    assert rep.coverage[(0, 0)] == 4
    assert all(rep.coverage[n] == 1 for n in NEIGHBOURS)
    assert rep.non_overlapping and rep.rf_size == (3, 3)


def test_square_orbit():
    rep = orbit_analysis(SQUARE_2X2)
    assert rep.coverage[(0, 0)] == 4
    assert all(rep.coverage[n] == 2 for n in [(0, 1), (1, 0), (0, -1), (-1, 0)])
    assert all(rep.coverage[n] == 1 for n in [(1, 1), (1, -1), (-1, 1), (-1, -1)])
    assert not rep.non_overlapping and rep.rf_size == (3, 3)
    assert rep.total == 16


def test_single_tap_orbit():
    rep = orbit_analysis(POINT)
    assert rep.coverage == {(0, 0): 4} and rep.rf_size == (1, 1)


def test_l_orbit_is_exactly_the_ring():
    hits = brute_orbit([(0, 1), (1, 1)])
    assert sorted(hits) == sorted(NEIGHBOURS) and set(hits.values()) == {1}


@given(patterns)
def test_orbit_matches_brute_force_and_conserves(p):
    rep = orbit_analysis(p)
    assert rep.coverage == brute_orbit(p.taps)
    assert rep.total == 4 * len(p.taps)


def test_find_nonoverlapping_three_taps():
    found = find_nonoverlapping(3)
    assert len(found) == 16
    assert L_SHAPE.taps in [p.taps for p in found]
    ref = orbit_analysis(L_SHAPE).coverage
    assert any(orbit_analysis(p).coverage == ref for p in found)
    for p in found:
        assert orbit_analysis(p).non_overlapping


@pytest.mark.parametrize("n,count", [(1, 1), (2, 8), (4, 0)])
def test_find_nonoverlapping_counts(n, count):
    assert len(find_nonoverlapping(n)) == count


def test_find_nonoverlapping_wider_window():
    assert len(find_nonoverlapping(2, window=5)) == 24


def test_pattern_invariants():
    with pytest.raises(ValueError, match="anchor"):
        KernelPattern([(0, 1)])
    with pytest.raises(ValueError):
        KernelPattern([(0, 0), (3, 0)])
    assert KernelPattern([(0, 0), (0, 1)], depth=2).index_dims == 4
    assert not KernelPattern(SQUARE_2X2.taps, 2).bakeable


def test_grid_formats():
    rep = orbit_analysis(SQUARE_2X2)
    csv = format_grid(rep, "csv").splitlines()
    assert csv[0] == "dy\\dx,-1,0,1"
    assert csv[2] == "0,2,4,2"
    text = format_grid(rep, "text", window=5)
    assert len(text.splitlines()) == 6


# --- storage ---------------------------------------------------------------

def test_single_l_table():
    rep = storage_report(spatial_config(1).units())
    assert rep.total == 4913


def test_empty_pipeline():
    assert storage_report([]).total == 0


def test_reference_total():
    rep = storage_report(reference_config())
    assert rep.total == 6 * 17 ** 4 + 2 * 17 ** 3 + 2 * 3 * 17 ** 4
    assert rep.l_to_s_delta == 2 * 16 * 17 ** 3


def test_swap_multiplies_by_17():
    units = spatial_config(2).units()
    before = storage_report(units).total
    swapped = [swap_l_for_square(units[0])] + units[1:]
    after = storage_report(swapped).total
    assert after - before == 16 * lut_size_bytes(1, 3)
    assert storage_report(swapped).rows[0].bytes == 17 * storage_report(units).rows[0].bytes
