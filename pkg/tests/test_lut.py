import numpy as np
import pytest
from hypothesis import given, strategies as st

from dnlut.lut import (BAKE_BATCH, FunctionUnit, LatticeIndex, LutFormatError, LutTable, bake, deserialize,
                       human_bytes, lattice_values, lut_size_bytes, quantize, serialize, table_bytes)
from dnlut.micronet.block import make_unit


@pytest.mark.parametrize("p,cell,frac", [(0, 0, 0), (255, 15, 15), (37, 2, 5), (16, 1, 0), (240, 15, 0)])
def test_quantize_examples(p, cell, frac):
    q = quantize(np.array([p]))
    assert (q.cell[0], q.frac[0]) == (cell, frac)


@given(st.lists(st.integers(0, 255), min_size=3, max_size=4))
def test_quantize_reconstructs(ps):
    q = quantize(np.array(ps))
    np.testing.assert_array_equal(q.value, ps)
    assert q.cell.max() < 16 and q.frac.max() < 16


def test_quantize_rejects_non_bytes():
    with pytest.raises(ValueError):
        quantize(np.array([256]))


# --- storage law -------------------------------------------------------------

@pytest.mark.parametrize("k,c,w,expected", [
    (1, 1, None, 17),
    (1, 3, None, 4913),
    (2, 1, None, 83521),
    (1, 3, 2, 24137569),
    (2, 3, None, 17 ** 12),
])
def test_lut_size_rows(k, c, w, expected):
    assert lut_size_bytes(k, c, w) == expected


@pytest.mark.parametrize("n,text", [
    (17, "17 B"), (4913, "4.9 KB"), (83521, "83.5 KB"), (24137569, "24.1 MB"), (17 ** 12, "582.6 TB"),
])
def test_human_bytes(n, text):
    assert human_bytes(n) == text


def test_size_law_big_integers():
    n = lut_size_bytes(5, 3)
    assert n == 17 ** 75 and isinstance(n, int)


def test_l_vs_square_ratio():
    assert table_bytes(4) == 17 * table_bytes(3)
    assert table_bytes(4, 3) // table_bytes(3, 3) == 17


@pytest.mark.parametrize("k,c", [(0, 1), (1, 0)])
def test_size_law_domain(k, c):
    with pytest.raises(ValueError):
        lut_size_bytes(k, c)


# --- baking --------------------------------------------------------------------

def test_lattice_probe_order_and_top_clamp():
    v = lattice_values(3)
    assert v.shape == (3, 17 ** 3)
    np.testing.assert_array_equal(v[:, 0], [0, 0, 0])
    np.testing.assert_array_equal(v[:, 1], [0, 0, 16])
    np.testing.assert_array_equal(v[:, 17], [0, 16, 0])
    np.testing.assert_array_equal(v[:, -1], [255, 255, 255])


@pytest.mark.parametrize("dims", [3, 4])
def test_bake_identity_block(dims):
    t = bake(FunctionUnit("id", dims, 1, "feature", lambda c: c[0]))
    for cell in [(0,) * dims, (3,) + (7,) * (dims - 1), (16,) + (0,) * (dims - 1)]:
        assert t.entry(cell)[0] == min(16 * cell[0], 255)


def test_bake_zero_block():
    t = bake(FunctionUnit("z", 4, 2, "residual", lambda c: np.zeros((2, c.shape[1]))))
    assert t.entries.dtype == np.int8 and not np.any(t.entries)
    assert t.entries.shape == (2, 17 ** 4)


def test_bake_clamps_to_entry_range():
    t = bake(FunctionUnit("big", 3, 1, "residual", lambda c: 10 * (c[0] - 0.5)))
    assert t.entries.min() == -128 and t.entries.max() == 127


def test_bake_refuses_5d():
    with pytest.raises(ValueError, match="refusing"):
        bake(FunctionUnit("x", 5, 1, "feature", lambda c: c[0]))


def test_baked_net_matches_float_net(rng):
    u = make_unit("u", "pcm-head", ((0, 0, 0), (0, 1, 0), (0, 0, 1), (0, 1, 1)), 1, "feature", 8, 2, rng, (0,))
    u.layers[-1].weights[...] *= 30
    t = bake(u)
    assert t.entries.shape[1] > BAKE_BATCH  # crosses a batch boundary
    for _ in range(20):
        cell = rng.integers(0, 17, 4)
        probe = np.minimum(cell * 16, 255).astype(np.float32)[:, None] / np.float32(255)
        ref = float(u.evaluate(probe)[0, 0]) * 255
        assert abs(int(t.entry(cell)[0]) - ref) <= 1


def test_bake_is_deterministic(rng):
    u = make_unit("u", "l-shaped", ((0, 0, 0), (0, 1, 0), (1, 1, 0)), 1, "residual", 8, 2, rng)
    assert bake(u) == bake(u)


# --- table invariants and file format ------------------------------------------

@pytest.mark.parametrize("dims", [2, 5])
def test_table_dims_restricted(dims):
    with pytest.raises(ValueError):
        LutTable("t", dims, 1, "feature", np.zeros((1, 17 ** dims), np.uint8))


def test_table_entry_count_checked():
    with pytest.raises(ValueError, match="entries shape"):
        LutTable("t", 3, 1, "feature", np.zeros((1, 100), np.uint8))


def random_table(r):
    dims = int(r.integers(3, 5))
    slots = int(r.integers(1, 4))
    sem = ["residual", "direct", "feature"][int(r.integers(3))]
    lo, hi = (-128, 128) if sem == "residual" else (0, 256)
    ent = r.integers(lo, hi, (slots, 17 ** dims))
    return LutTable(f"LUT_{int(r.integers(1000))}", dims, slots, sem, ent)


@given(st.integers(0, 2 ** 32 - 1))
def test_serialize_roundtrip(seed):
    t = random_table(np.random.default_rng(seed))
    blob = serialize(t)
    back = deserialize(blob)
    assert back == t
    assert serialize(back) == blob


def test_payload_length_is_size_law(rng):
    t = random_table(rng)
    blob = serialize(t)
    assert len(blob) - (blob.index(t.id.encode()) + len(t.id) + 8) == t.out_slots * 17 ** t.dims


@pytest.mark.parametrize("mutate,reason", [
    (lambda b: b"NOPE" + b[4:], "bad-magic"),
    (lambda b: b[:4] + b"\x07\x00" + b[6:], "bad-version"),
    (lambda b: b[:10], "truncated"),
    (lambda b: b[:-1], "truncated"),
    (lambda b: b + b"\x00", "invalid"),
    (lambda b: b[:9] + b"\x09" + b[10:], "invalid"),
])
def test_deserialize_errors(mutate, reason, rng):
    blob = serialize(random_table(rng))
    with pytest.raises(LutFormatError) as e:
        deserialize(mutate(blob))
    assert e.value.reason == reason


def test_lattice_index_value():
    q = LatticeIndex(np.array([2, 15]), np.array([5, 15]))
    np.testing.assert_array_equal(q.value, [37, 255])
