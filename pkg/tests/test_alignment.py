import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from tristream.alignment import (
    AlignmentBatch, AlignmentHead, TrainHistory, align_loss, cosine_loss, grad_check, host_features, hybrid_loss,
    infonce_loss, mse_loss, visual_delta,
)
from tristream.errors import InputError
from tristream.frames import FrameBuffer


def batch_params(rng, B, d):
    return {"M": rng.normal(size=(B, d)), "V": rng.normal(size=(B, d)), "log_tau": np.array(rng.uniform(-2, 0.5))}


def via(loss):
    def fn(p):
        value, g = loss(AlignmentBatch(p["M"], p["V"]), float(p["log_tau"]))
        return value, g
    return fn


def test_two_orthonormal_pairs():
    eye = np.eye(2)
    loss, _ = infonce_loss(AlignmentBatch(eye, eye), 0.0)
    assert abs(loss - (-math.log(math.e / (math.e + 1)))) <= 1e-9


def test_uniform_limit():
    rng = np.random.default_rng(0)
    for B in (2, 4, 8):
        loss, _ = infonce_loss(AlignmentBatch(rng.normal(size=(B, 5)), rng.normal(size=(B, 5))), math.log(1e6))
        assert abs(loss - math.log(B)) <= 1e-3


@given(st.integers(0, 10 ** 6), st.integers(2, 6), st.floats(-2, 1))
def test_matches_loop_reference(seed, B, log_tau):
    rng = np.random.default_rng(seed)
    M, V = rng.normal(size=(2, B, 4))
    assert infonce_loss(AlignmentBatch(M, V), log_tau)[0] == pytest.approx(oracles.infonce(M, V, math.exp(log_tau)),
                                                                          rel=1e-10)


@given(st.integers(0, 10 ** 6), st.floats(0.01, 100))
def test_scale_invariance(seed, alpha):
    rng = np.random.default_rng(seed)
    M, V = rng.normal(size=(2, 4, 3))
    a = infonce_loss(AlignmentBatch(M, V), -1.0)[0]
    b = infonce_loss(AlignmentBatch(alpha * M, V), -1.0)[0]
    assert abs(a - b) <= 1e-10


@given(st.integers(0, 10 ** 6))
def test_permutation_symmetry(seed):
    rng = np.random.default_rng(seed)
    M, V = rng.normal(size=(2, 5, 3))
    perm = rng.permutation(5)
    assert infonce_loss(AlignmentBatch(M, V), 0.1)[0] == pytest.approx(
        infonce_loss(AlignmentBatch(M[perm], V[perm]), 0.1)[0], abs=1e-12)


def test_align_composition():
    rng = np.random.default_rng(1)
    M, V = rng.normal(size=(2, 4, 3))
    assert align_loss(AlignmentBatch(M, V, 0.0), 0.2)[0] == infonce_loss(AlignmentBatch(M, V), 0.2)[0]
    Q = np.linalg.qr(rng.normal(size=(4, 4)))[0]
    base = infonce_loss(AlignmentBatch(Q, Q), 0.0)[0]
    assert align_loss(AlignmentBatch(Q, Q, 0.1), 0.0)[0] == pytest.approx(base, abs=1e-12)
    c, _ = cosine_loss(AlignmentBatch(Q, -Q))
    assert c == pytest.approx(2.0)
    assert align_loss(AlignmentBatch(Q, -Q, 0.1), 0.0)[0] == pytest.approx(
        infonce_loss(AlignmentBatch(Q, -Q), 0.0)[0] + 0.2)
    head = AlignmentHead(np.eye(3), log_tau=0.2)
    assert align_loss(AlignmentBatch(M, V), head)[0] == align_loss(AlignmentBatch(M, V), 0.2)[0]


def test_mse_examples():
    rng = np.random.default_rng(2)
    M = rng.normal(size=(4, 3))
    assert mse_loss(AlignmentBatch(M, M))[0] == 0
    V = M.copy()
    V[0, 0] += 1
    assert mse_loss(AlignmentBatch(M, V))[0] == pytest.approx(1 / 4)
    W = rng.normal(size=(4, 3))
    assert mse_loss(AlignmentBatch(M + 2 * (W - M), M))[0] == pytest.approx(4 * mse_loss(AlignmentBatch(W, M))[0])


def test_hybrid_composition():
    rng = np.random.default_rng(3)
    Q = np.linalg.qr(rng.normal(size=(3, 3)))[0]
    assert hybrid_loss(AlignmentBatch(Q, Q), 0.0)[0] == pytest.approx(align_loss(AlignmentBatch(Q, Q), 0.0)[0])
    M, V = rng.normal(size=(2, 3, 3))
    b = AlignmentBatch(M, V)
    assert hybrid_loss(b, 0.0, weight=0)[0] == align_loss(b, 0.0)[0]
    h, hg = hybrid_loss(b, 0.0)
    a, ag = align_loss(b, 0.0)
    m, mg = mse_loss(b)
    assert h == pytest.approx(a + 0.5 * m)
    assert np.allclose(hg["M"], ag["M"] + 0.5 * mg["M"], rtol=0, atol=1e-15)


def test_grad_check_examples():
    rng = np.random.default_rng(4)
    assert grad_check(via(lambda b, t: infonce_loss(b, t)), batch_params(rng, 4, 8), 1e-5) <= 1e-4
    assert grad_check(via(lambda b, t: mse_loss(b)), batch_params(rng, 4, 8), 1e-5) <= 1e-6
    assert grad_check(lambda p: (3.0, {}), {"x": np.ones(3)}) == 0.0
    with pytest.raises(InputError):
        grad_check(lambda p: (3.0, {}), {"x": np.ones(1)}, eps=1e-2)
    with pytest.raises(InputError):
        grad_check(lambda p: (float("nan"), {}), {"x": np.ones(1)})


def test_grad_check_detects_wrong_gradient():
    rng = np.random.default_rng(5)

    def wrong(p):
        loss, g = mse_loss(AlignmentBatch(p["M"], p["V"]))
        return loss, {"M": 2 * g["M"], "V": g["V"]}
    err, detail = grad_check(wrong, batch_params(rng, 3, 2), return_detail=True)
    assert detail["M"] > 0.1 and detail["V"] < 1e-6


def test_input_validation():
    with pytest.raises(InputError):
        AlignmentBatch(np.ones((2, 3)), np.ones((3, 3)))
    with pytest.raises(InputError):
        infonce_loss(AlignmentBatch(np.ones((1, 3)), np.ones((1, 3))), 0.0)
    with pytest.raises(InputError):
        cosine_loss(AlignmentBatch(np.zeros((2, 3)), np.ones((2, 3))))


def test_visual_delta_examples():
    rng = np.random.default_rng(6)
    f = rng.normal(size=(4, 4, 5))
    assert not visual_delta(f, f).any()
    assert np.allclose(visual_delta(f + 0.3, f), 0.3)
    g = rng.normal(size=(4, 4, 5))
    assert np.allclose(visual_delta(f, g), -visual_delta(g, f))


def test_host_features_respond_to_translation():
    img = np.zeros((32, 32, 1), np.uint8)
    img[8:16, 8:16] = 200
    moved = np.roll(img, 8, axis=1)
    a, b = host_features(FrameBuffer(img)), host_features(FrameBuffer(moved))
    assert a.shape == (4, 4, 6)
    v = visual_delta(b, a)
    assert v[1] > 0 and abs(v[2]) < 1e-12  # rightward motion raises the x-weighted mean only


def test_history_csv_round_trip():
    h = TrainHistory()
    h.append(1.5, 0.25, 0.1)
    h.append(1.25, 0.5, 0.09)
    text = h.to_csv()
    assert text.splitlines()[0] == "step,loss,mean_cosine,tau"
    assert TrainHistory.from_csv(text) == h
