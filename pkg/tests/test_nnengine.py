import math
import struct

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gradcheck import away_from_zero, check_op
from specklebench import NumericalFault
from specklebench.nn import (
    Adam, CheckpointError, Conv, SpectralNormState, Tensor, concat, conv2d, gan_bce_loss, l1_loss,
    load_records, lsgan_loss, pointwise, save_records, sigma_estimate, spectral_normalize, upsample_nearest,
)

TOL = 1e-3


# --- Tensor core ---------------------------------------------------------------

def test_backward_needs_scalar_or_grad():
    x = Tensor(np.ones((2, 2)), requires_grad=True)
    with pytest.raises(ValueError):
        (x * 2.0).backward()


def test_shared_node_accumulates():
    x = Tensor(np.array([3.0]), requires_grad=True)
    y = x * x + x  # dy/dx = 2x + 1
    y.backward(np.ones(1))
    assert x.grad[0] == 7.0


def test_sub_and_neg():
    a = Tensor(np.array([2.0]), requires_grad=True)
    b = Tensor(np.array([5.0]), requires_grad=True)
    (-(a - b)).backward(np.ones(1))
    assert a.grad[0] == -1.0 and b.grad[0] == 1.0


# --- conv2d ------------------------------------------------------------------------

def test_conv_identity_kernel(rng):
    x = rng.random((2, 3, 5, 4))
    w = np.zeros((3, 3, 1, 1))
    w[[0, 1, 2], [0, 1, 2]] = 1.0
    assert np.array_equal(conv2d(Tensor(x), Tensor(w)).data, x)


def test_conv_all_ones_sum():
    out = conv2d(Tensor(np.ones((1, 1, 3, 3))), Tensor(np.ones((1, 1, 3, 3))))
    assert out.shape == (1, 1, 1, 1) and out.data.item() == 9.0


def test_conv_output_dims_and_errors():
    x = Tensor(np.zeros((1, 2, 9, 7)))
    assert conv2d(x, Tensor(np.zeros((4, 2, 4, 4))), stride=2, pad=1).shape == (1, 4, 4, 3)
    with pytest.raises(ValueError, match="channel axis"):
        conv2d(x, Tensor(np.zeros((4, 3, 3, 3))))
    with pytest.raises(ValueError, match="H=9"):
        conv2d(Tensor(np.zeros((1, 2, 9, 2))), Tensor(np.zeros((1, 2, 3, 3))))
    with pytest.raises(ValueError, match="bias"):
        conv2d(x, Tensor(np.zeros((4, 2, 3, 3))), Tensor(np.zeros(3)))


def test_conv_matches_direct_loop(rng):
    x, w, b = rng.random((2, 3, 6, 5)), rng.random((4, 3, 3, 3)), rng.random(4)
    out = conv2d(Tensor(x), Tensor(w), Tensor(b), stride=2, pad=1).data
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    for n in range(2):
        for o in range(4):
            for i in range(out.shape[2]):
                for j in range(out.shape[3]):
                    ref = np.sum(xp[n, :, 2 * i:2 * i + 3, 2 * j:2 * j + 3] * w[o]) + b[o]
                    assert out[n, o, i, j] == pytest.approx(ref, abs=1e-12)


@pytest.mark.parametrize("stride,pad,k", [(1, 0, 3), (2, 1, 4), (1, 1, 3), (2, 0, 2)])
def test_conv_gradients(rng, stride, pad, k):
    x, w, b = rng.standard_normal((2, 3, 7, 6)), rng.standard_normal((4, 3, k, k)), rng.standard_normal(4)
    assert check_op(lambda x, w, b: conv2d(x, w, b, stride, pad), [x, w, b], rng) < TOL


# --- upsample / concat ---------------------------------------------------------------

def test_upsample_cases():
    x = Tensor(np.full((1, 1, 1, 1), 0.7))
    assert upsample_nearest(x, 1) is x
    assert np.array_equal(upsample_nearest(x, 2).data, np.full((1, 1, 2, 2), 0.7))
    with pytest.raises(ValueError):
        upsample_nearest(x, 0)


@pytest.mark.parametrize("factor", [2, 3])
def test_upsample_gradient(rng, factor):
    assert check_op(lambda x: upsample_nearest(x, factor), [rng.standard_normal((2, 2, 3, 4))], rng) < TOL


def test_concat_gradient(rng):
    a, b = rng.standard_normal((1, 2, 3, 3)), rng.standard_normal((1, 3, 3, 3))
    assert check_op(lambda a, b: concat([a, b]), [a, b], rng) < TOL


# --- pointwise -------------------------------------------------------------------------

def test_pointwise_values():
    z = Tensor(np.zeros(1))
    assert pointwise(z, "tanh").data[0] == 0.0
    assert pointwise(z, "sigmoid").data[0] == 0.5
    assert pointwise(Tensor(np.array([-1.0])), "leaky_relu").data[0] == pytest.approx(-0.2)
    assert pointwise(Tensor(np.array([-1.0, 2.0])), "relu").data.tolist() == [0.0, 2.0]
    with pytest.raises(ValueError):
        pointwise(z, "gelu")


def test_sigmoid_stable_at_extremes():
    y = pointwise(Tensor(np.array([-800.0, 800.0])), "sigmoid").data
    assert np.all(np.isfinite(y)) and y[0] == 0.0 and y[1] == 1.0


@pytest.mark.parametrize("kind", ["leaky_relu", "relu", "tanh", "sigmoid"])
def test_pointwise_gradients(rng, kind):
    assert check_op(lambda x: pointwise(x, kind), [away_from_zero(rng, (2, 3, 4, 4))], rng) < TOL


# --- losses ------------------------------------------------------------------------------

def test_l1_values_and_gradient(rng):
    t = rng.random((1, 1, 3, 3))
    assert l1_loss(Tensor(t), t).item() == 0.0
    assert l1_loss(Tensor(t + 1), t).item() == pytest.approx(1.0)
    p = Tensor(t + away_from_zero(rng, t.shape), requires_grad=True)
    l1_loss(p, t).backward()
    assert np.allclose(p.grad, np.sign(p.data - t) / t.size)
    assert check_op(lambda p: l1_loss(p, t), [t + away_from_zero(rng, t.shape)], rng) < TOL
    tie = Tensor(t.copy(), requires_grad=True)
    l1_loss(tie, t).backward()
    assert np.all(tie.grad == 0)
    with pytest.raises(ValueError):
        l1_loss(Tensor(t), t[..., :2])


def test_bce_values():
    z = Tensor(np.zeros((1, 1, 2, 2)))
    assert gan_bce_loss(z, True).item() == pytest.approx(math.log(2))
    assert gan_bce_loss(z, False).item() == pytest.approx(math.log(2))
    assert gan_bce_loss(Tensor(np.full((1, 1, 1, 1), 50.0)), True).item() < 1e-20
    assert np.isfinite(gan_bce_loss(Tensor(np.full((1, 1, 1, 1), -1000.0)), True).item())


@pytest.mark.parametrize("real", [True, False])
def test_bce_gradient(rng, real):
    logits = np.array([-2.0, 0.5, 3.0]).reshape(1, 1, 1, 3)
    assert check_op(lambda x: gan_bce_loss(x, real), [logits], rng) < TOL


def test_lsgan_gradient(rng):
    assert check_op(lambda x: lsgan_loss(x, True), [rng.standard_normal((1, 1, 2, 3))], rng) < TOL


# --- spectral norm --------------------------------------------------------------------------

def _converge(w, iters, rng):
    t = Tensor(w, requires_grad=True)
    st_ = SpectralNormState.init(w.shape[0], rng, dtype=np.float64)
    for _ in range(iters):
        eff = spectral_normalize(t, st_)
    return t, st_, eff


def test_sn_diagonal(rng):
    _, st_, eff = _converge(np.diag([3.0, 1.0]), 30, rng)
    assert sigma_estimate(np.diag([3.0, 1.0]), st_) == pytest.approx(3.0, abs=1e-9)
    assert np.linalg.svd(eff.data, compute_uv=False)[0] == pytest.approx(1.0, abs=1e-6)


def test_sn_orthogonal(rng):
    q, _ = np.linalg.qr(rng.standard_normal((6, 6)))
    _, _, eff = _converge(q, 5, rng)
    assert np.max(np.abs(eff.data - q)) <= 1e-6


def test_sn_random_matrix_within_one_percent(rng):
    w = rng.standard_normal((8, 12))
    _, st_, _ = _converge(w, 50, rng)
    assert sigma_estimate(w, st_) == pytest.approx(np.linalg.svd(w, compute_uv=False)[0], rel=0.01)
    assert abs(np.linalg.norm(st_.u) - 1.0) <= 1e-6


def test_sn_zero_weight_guarded(rng):
    _, _, eff = _converge(np.zeros((3, 4)), 2, rng)
    assert np.all(eff.data == 0)


def test_sn_is_functional(rng):
    w = rng.standard_normal((4, 2, 3, 3))
    before = w.copy()
    _converge(w, 3, rng)
    assert np.array_equal(w, before)


def test_sn_gradient(rng):
    w = rng.standard_normal((4, 2, 3, 3))
    _, st_, _ = _converge(w, 20, rng)
    assert check_op(lambda t: spectral_normalize(t, st_, update=False), [w], rng) < TOL


def test_sn_update_false_keeps_u(rng):
    w = rng.standard_normal((4, 6))
    st_ = SpectralNormState.init(4, rng, dtype=np.float64)
    u0 = st_.u.copy()
    spectral_normalize(Tensor(w), st_, update=False)
    assert np.array_equal(st_.u, u0)
    spectral_normalize(Tensor(w), st_)
    assert not np.array_equal(st_.u, u0)


# --- Adam ------------------------------------------------------------------------------------

def test_adam_first_step_closed_form():
    p = Tensor(np.array([1.0]), requires_grad=True, name="theta")
    opt = Adam([p], lr=0.1)
    p.grad = np.array([4.0])
    opt.step()
    assert p.data[0] == pytest.approx(0.9, abs=1e-9)


def test_adam_zero_grad_fixed_point(rng):
    p = Tensor(rng.standard_normal(5), requires_grad=True, name="w")
    before = p.data.copy()
    opt = Adam([p])
    for _ in range(3):
        p.grad = np.zeros(5)
        opt.step()
    assert np.array_equal(p.data, before)


def reference_adam(theta, grads, lr, b1=0.5, b2=0.999, eps=1e-8):
    m = v = 0.0
    for t, g in enumerate(grads, 1):
        m = b1 * m + (1 - b1) * g(theta)
        v = b2 * v + (1 - b2) * g(theta) ** 2
        theta = theta - lr * (m / (1 - b1**t)) / (math.sqrt(v / (1 - b2**t)) + eps)
    return theta


def test_adam_quadratic_matches_reference():
    p = Tensor(np.array([1.0]), requires_grad=True, name="theta")
    opt = Adam([p], lr=0.05)
    for _ in range(10):
        p.grad = 2 * p.data.copy()
        opt.step()
    ref = reference_adam(1.0, [lambda th: 2 * th] * 10, 0.05)
    assert p.data[0] == pytest.approx(ref, abs=1e-12)
    assert abs(p.data[0]) < 1.0


def test_adam_rejects_nonfinite_and_duplicates():
    p = Tensor(np.ones(2), requires_grad=True, name="enc1.weight")
    opt = Adam([p])
    p.grad = np.array([np.nan, 0.0])
    with pytest.raises(NumericalFault, match="enc1.weight"):
        opt.step()
    with pytest.raises(ValueError):
        Adam([p, Tensor(np.ones(1), requires_grad=True, name="enc1.weight")])


@given(st.floats(-10, 10).filter(lambda g: abs(g) > 1e-3), st.floats(1e-4, 0.5))
def test_adam_first_step_magnitude_is_lr(g, lr):
    p = Tensor(np.array([0.0]), requires_grad=True, name="x")
    opt = Adam([p], lr=lr)
    p.grad = np.array([g])
    opt.step()
    assert p.data[0] == pytest.approx(-math.copysign(lr, g), rel=1e-6)


# --- layers / checkpoint -----------------------------------------------------------------------

def test_conv_layer_forward_deterministic(rng):
    layer = Conv("c", 3, 4, 3, 1, 1, spectral=True, rng=rng)
    x = Tensor(rng.standard_normal((1, 3, 8, 8)).astype(np.float32))
    a = layer(x, update_sn=False).data
    b = layer(x, update_sn=False).data
    assert np.array_equal(a, b) and a.dtype == np.float32
    assert layer.n_params() == 4 * 3 * 9 + 4
    assert [p.name for p in layer.parameters()] == ["c.weight", "c.bias"]


def test_checkpoint_round_trip_bit_exact(tmp_path, rng):
    rec = {"a.weight": rng.standard_normal((3, 2, 4, 4)).astype(np.float32),
           "a.bias": rng.standard_normal(3).astype(np.float32),
           "scalar": np.array(2.5, dtype=np.float32)}
    save_records(tmp_path / "m.ckpt", rec)
    back = load_records(tmp_path / "m.ckpt")
    assert list(back) == list(rec)
    for k in rec:
        assert back[k].shape == rec[k].shape
        assert back[k].tobytes() == rec[k].tobytes()
    raw = (tmp_path / "m.ckpt").read_bytes()
    assert raw[:4] == b"SPKL" and struct.unpack("<II", raw[4:12]) == (1, 3)


def test_checkpoint_corruption(tmp_path):
    save_records(tmp_path / "m.ckpt", {"w": np.ones((2, 2), np.float32)})
    raw = (tmp_path / "m.ckpt").read_bytes()
    for name, blob, msg in [("magic", b"XXXX" + raw[4:], "magic"),
                            ("version", raw[:4] + struct.pack("<I", 9) + raw[8:], "version"),
                            ("trunc", raw[:-3], "truncated"),
                            ("trail", raw + b"\0", "trailing")]:
        (tmp_path / name).write_bytes(blob)
        with pytest.raises(CheckpointError, match=msg):
            load_records(tmp_path / name)
