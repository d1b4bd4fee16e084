import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dnlut.micronet.block import make_unit
from dnlut.micronet.checkpoint import CheckpointError, dump_layers, load_layers
from dnlut.micronet.optim import Adam, TrainConfig, adam_step, cosine_lr
from dnlut.micronet.tensor import (Layer, LayerSpec, ShapeError, Tensor, backward, forward, gather_taps,
                                   mse_loss, one_by_one, scatter_taps)

PCM_TAPS = ((0, 0, 0), (0, 1, 0), (0, 0, 1), (0, 1, 1))
L_TAPS = ((0, 0, 2), (0, 1, 2), (1, 1, 2))
KIND_TAPS = {
    "pcm-head": PCM_TAPS,
    "l-shaped": L_TAPS,
    "one-by-one": ((0, 0, 0), (0, 0, 1), (0, 0, 2)),
    "fusion-group": ((0, 0, 1), (0, 0, 3), (0, 0, 0), (0, 0, 2)),
}


def random_case(rng, kind, act, out=3, shape=(2, 4, 5, 6)):
    """A layer and input whose pre-activations keep clear of activation kinks."""
    taps = KIND_TAPS[kind]
    for _ in range(100):
        w = rng.normal(size=(out, len(taps)))
        b = rng.normal(size=out) * 0.3
        x = rng.uniform(0, 1, size=shape)
        layer = Layer(LayerSpec(kind, taps, w, b, act))
        cols = gather_taps(x, taps).reshape(len(taps), -1)
        pre = w @ cols + b[:, None]
        margin = np.abs(pre).min()
        if act == "clamp01":
            margin = min(margin, np.abs(pre - 1).min())
        if act == "identity" or margin > 0.02:
            return layer, Tensor(x)
    raise RuntimeError("could not draw a kink-free case")


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)


def fd_check(layer, x, rng, eps=1e-3):
    proj = rng.normal(size=(x.shape[0], layer.spec.out_channels) + x.shape[2:])

    def loss():
        return float(np.sum(forward(Layer(layer.spec), x).data * proj))

    forward(layer, x)
    gin, gw, gb = backward(layer, x, proj)
    errs = []
    for arr, g in ((layer.spec.weights, gw), (layer.spec.bias, gb), (x.data, gin)):
        num = np.zeros_like(arr)
        for i in np.ndindex(arr.shape):
            old = arr[i]
            arr[i] = old + eps
            lp = loss()
            arr[i] = old - eps
            lm = loss()
            arr[i] = old
            num[i] = (lp - lm) / (2 * eps)
        errs.append(rel_err(g, num))
    return errs


# --- forward ---------------------------------------------------------------

def test_identity_one_by_one_is_identity(rng):
    x = Tensor(rng.normal(size=(2, 3, 4, 5)))
    spec = LayerSpec("one-by-one", [(0, 0, c) for c in range(3)], np.eye(3), np.zeros(3), "identity")
    np.testing.assert_array_equal(forward(Layer(spec), x).data, x.data)


@pytest.mark.parametrize("v", [0.0, 0.25, 0.9])
def test_pcm_head_projection_of_constant(v):
    spec = LayerSpec("pcm-head", PCM_TAPS, [[1.0, 0, 0, 0]], [0.0], "identity")
    y = forward(Layer(spec), Tensor(np.full((1, 3, 5, 5), v)))
    np.testing.assert_allclose(y.data, v)


def test_l_shaped_mean_of_gathered_taps():
    img = np.zeros((1, 1, 3, 3))
    img[0, 0, 0, 0], img[0, 0, 0, 1], img[0, 0, 1, 1] = 30, 60, 90
    spec = LayerSpec("l-shaped", ((0, 0, 0), (0, 1, 0), (1, 1, 0)), [[1 / 3] * 3], [0.0], "identity")
    y = forward(Layer(spec), Tensor(img))
    assert y.data[0, 0, 0, 0] == pytest.approx(60.0)


@given(st.floats(0, 1), st.sampled_from(sorted(KIND_TAPS)))
def test_averaging_layer_keeps_constant_image(v, kind):
    taps = KIND_TAPS[kind]
    spec = LayerSpec(kind, taps, [np.full(len(taps), 1 / len(taps))], [0.0], "identity")
    y = forward(Layer(spec), Tensor(np.full((1, 4, 3, 4), v)))
    np.testing.assert_allclose(y.data, v, atol=1e-12)


def test_replicate_padding_routes_to_edge():
    x = np.arange(9.0).reshape(1, 1, 3, 3)
    g = gather_taps(x, ((1, 1, 0),))
    assert g[0, 0, 2, 2] == x[0, 0, 2, 2]
    assert g[0, 0, 0, 2] == x[0, 0, 1, 2]


@pytest.mark.parametrize("kind,taps", [
    ("pcm-head", ((0, 0, 0), (0, 1, 0), (0, 0, 1))),
    ("pcm-head", ((0, 0, 0), (0, 1, 1), (0, 0, 1), (0, 1, 0))),
    ("l-shaped", ((0, 0, 0), (0, 1, 0), (1, 0, 0))),
    ("l-shaped", ((0, 0, 0), (0, 1, 1), (1, 1, 0))),
    ("one-by-one", ((0, 1, 0),)),
    ("fusion-group", tuple((0, 0, c) for c in range(5))),
])
def test_illegal_taps_rejected(kind, taps):
    with pytest.raises(ValueError):
        LayerSpec(kind, taps, np.zeros((1, len(taps))), np.zeros(1))


def test_channel_mismatch_rejected():
    spec = LayerSpec("l-shaped", L_TAPS, np.ones((1, 3)), np.zeros(1))
    with pytest.raises(ShapeError, match="channel 2"):
        forward(Layer(spec), Tensor(np.zeros((1, 2, 4, 4))))


def test_tensor_invariants():
    with pytest.raises(ShapeError):
        Tensor(np.zeros((2, 3, 4)))
    with pytest.raises(ShapeError):
        Tensor(np.zeros((1, 1, 2, 2)), grad=np.zeros((1, 1, 2, 3)))


# --- backward --------------------------------------------------------------

def test_backward_needs_forward(rng):
    layer, x = random_case(rng, "one-by-one", "relu")
    with pytest.raises(RuntimeError, match="before forward"):
        backward(layer, x, np.zeros((2, 3, 5, 6)))


def test_zero_output_grad_gives_zero_grads(rng):
    layer, x = random_case(rng, "pcm-head", "relu")
    forward(layer, x)
    for g in backward(layer, x, np.zeros((2, 3, 5, 6))):
        assert not np.any(g)


def test_single_tap_identity_passes_grad(rng):
    x = Tensor(rng.normal(size=(1, 1, 3, 4)))
    layer = Layer(LayerSpec("one-by-one", [(0, 0, 0)], [[1.0]], [0.0], "identity"))
    forward(layer, x)
    g = rng.normal(size=(1, 1, 3, 4))
    np.testing.assert_array_equal(backward(layer, x, g)[0], g)


@pytest.mark.parametrize("kind", sorted(KIND_TAPS))
@pytest.mark.parametrize("act", ["relu", "identity", "clamp01"])
def test_gradients_match_finite_differences(kind, act, rng):
    layer, x = random_case(rng, kind, act, shape=(1, 4, 3, 4))
    assert max(fd_check(layer, x, rng)) < 1e-4


@given(st.integers(0, 2 ** 32 - 1))
def test_scatter_is_adjoint_of_gather(seed):
    r = np.random.default_rng(seed)
    shape = (1, 2, int(r.integers(1, 5)), int(r.integers(1, 5)))
    taps = ((0, 0, 0), (0, 1, 1), (1, 1, 0), (1, 0, 1))
    x = r.normal(size=shape)
    g = r.normal(size=(len(taps),) + (shape[0],) + shape[2:])
    lhs = np.sum(gather_taps(x, taps) * g)
    rhs = np.sum(x * scatter_taps(g, taps, shape))
    assert lhs == pytest.approx(rhs)


def test_unit_gradient_matches_finite_differences(rng):
    u = make_unit("u", "pcm-head", PCM_TAPS, 1, "feature", hidden=6, depth=2, rng=rng, skip=(0,), dtype=np.float64)
    u.layers[-1].weights[...] *= 10
    cols = rng.uniform(0.2, 0.8, size=(4, 40))
    proj = rng.normal(size=(1, 40))
    u.zero_grad()
    u.forward(cols)
    gcols = u.backward(proj)
    eps = 1e-6
    num = np.zeros_like(cols)
    for i in np.ndindex(cols.shape):
        c = cols.copy()
        c[i] += eps
        lp = np.sum(u.evaluate(c) * proj)
        c[i] -= 2 * eps
        num[i] = (lp - np.sum(u.evaluate(c) * proj)) / (2 * eps)
    assert rel_err(gcols, num) < 1e-4
    w = u.layers[1].weights
    gw = u.grads()[2]
    numw = np.zeros_like(w)
    for i in np.ndindex(w.shape):
        old = w[i]
        w[i] = old + eps
        lp = np.sum(u.evaluate(cols) * proj)
        w[i] = old - eps
        numw[i] = (lp - np.sum(u.evaluate(cols) * proj)) / (2 * eps)
        w[i] = old
    assert rel_err(gw, numw) < 1e-4


# --- loss and optimiser -------------------------------------------------------

def test_mse_examples():
    assert mse_loss(np.ones(4), np.ones(4))[0] == 0
    assert mse_loss(np.arange(4.0) + 1, np.arange(4.0))[0] == 1
    loss, grad = mse_loss(np.array([0.0, 2.0]), np.array([1.0, 0.0]))
    assert loss == 2.5
    np.testing.assert_allclose(grad, [-1.0, 2.0])


def test_mse_shape_mismatch():
    with pytest.raises(ShapeError):
        mse_loss(np.zeros(3), np.zeros(4))


def test_cosine_schedule_endpoints():
    cfg = TrainConfig(iterations=1000, lr_max=1e-3, lr_min=1e-5)
    assert cosine_lr(1000, cfg) == pytest.approx(1e-5)
    assert cosine_lr(500, cfg) == pytest.approx((1e-3 + 1e-5) / 2)
    assert cosine_lr(0, cfg) == pytest.approx(1e-3)


@pytest.mark.parametrize("kw", [dict(iterations=0), dict(lr_min=0.0), dict(lr_min=1e-2), dict(patch_size=3)])
def test_train_config_invariants(kw):
    with pytest.raises(ValueError):
        TrainConfig(**kw)


def test_adam_zero_grad_leaves_params(rng):
    p = [rng.normal(size=3)]
    before = p[0].copy()
    opt = Adam()
    opt.step(p, [np.ones(3)], 1, 0.1)
    m1, v1 = opt.state.m[0].copy(), opt.state.v[0].copy()
    after = p[0].copy()
    opt.step(p, [np.zeros(3)], 2, 0.1)
    np.testing.assert_allclose(opt.state.m[0], 0.9 * m1)
    np.testing.assert_allclose(opt.state.v[0], 0.999 * v1)
    assert not np.array_equal(before, after)


def test_adam_first_step_is_lr_sized():
    p = [np.zeros(2)]
    Adam().step(p, [np.array([3.0, -0.5])], 1, 0.01)
    np.testing.assert_allclose(p[0], [-0.01, 0.01], rtol=1e-6)


def test_adam_skips_non_finite():
    p = [np.zeros(2)]
    opt = Adam()
    assert not adam_step(p, [np.array([np.nan, 1.0])], opt, 1, TrainConfig())
    assert opt.state.skipped == 1
    assert not np.any(p[0])


# --- checkpoint --------------------------------------------------------------

def test_checkpoint_roundtrip(rng):
    u = make_unit("u", "l-shaped", L_TAPS, 1, "feature", hidden=5, depth=2, rng=rng, skip=(0,))
    blob = dump_layers(u.layers, "[pipeline]\n")
    layers, text = load_layers(blob)
    assert text == "[pipeline]\n"
    for a, b in zip(u.layers, layers):
        assert (a.kind, a.in_taps, a.activation) == (b.kind, b.in_taps, b.activation)
        np.testing.assert_array_equal(a.weights, b.weights)
        np.testing.assert_array_equal(a.bias, b.bias)
    assert dump_layers(layers, "[pipeline]\n") == blob


@pytest.mark.parametrize("mutate,msg", [
    (lambda b: b"XXXX" + b[4:], "magic"),
    (lambda b: b[:4] + b"\x09\x00" + b[6:], "version"),
    (lambda b: b[:-3], "truncated"),
    (lambda b: b + b"\x00", "trailing"),
])
def test_checkpoint_errors(mutate, msg):
    blob = dump_layers([one_by_one(2, 2)])
    with pytest.raises(CheckpointError, match=msg):
        load_layers(mutate(blob))
