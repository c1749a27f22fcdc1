import numpy as np
import pytest

from tristream.alignment import grad_check
from tristream.errors import InputError
from tristream.training import (
    DatasetSpec, DivergenceError, TrainConfig, between_class_separation, fit_stage1, init_params,
    make_motion_dataset, mean_cosine, model_loss, smoothed, train_stage1,
)


@pytest.fixture(scope="module")
def small_data():
    return make_motion_dataset(DatasetSpec(n_intervals=32, seed=3))


def test_dataset_shapes_and_balance(small_data):
    d = small_data
    assert len(d) == 32 and d.X_mv.shape == (32, 32) and d.X_res.shape == (32, 256) and d.X_ifr.shape == (32, 64)
    assert d.d_v == 6
    assert np.bincount(d.labels).tolist() == [8, 8, 8, 8]


def test_dataset_targets_encode_direction(small_data):
    d = small_data
    # x-weighted channel of the delta follows horizontal motion, y-weighted follows vertical
    right, left, down, up = (d.V[d.labels == k] for k in range(4))
    assert np.all(right[:, 1] > 0) and np.all(left[:, 1] < 0)
    assert np.all(down[:, 2] > 0) and np.all(up[:, 2] < 0)


@pytest.mark.parametrize("fusion", ["gated", "concat", "weighted_sum", "concat_mlp"])
@pytest.mark.parametrize("loss", ["infonce", "mse", "hybrid"])
def test_model_gradients(fusion, loss):
    rng = np.random.default_rng(0)
    X = (rng.normal(size=(4, 5)), rng.normal(size=(4, 6)), rng.normal(size=(4, 3)))
    V = rng.normal(size=(4, 3))
    for heads in (False, True):
        cfg = TrainConfig(d=4, fusion=fusion, loss=loss, branch_heads=heads, B=4)
        p = {k: v + rng.normal(0, 0.3, np.shape(v)) for k, v in init_params(cfg, (5, 6, 3, 3)).items()}
        assert grad_check(lambda q: model_loss(q, cfg, X, V), p) <= 1e-6


def test_steps_must_be_positive(small_data):
    with pytest.raises(InputError):
        train_stage1(TrainConfig(steps=0), small_data)


def test_determinism(small_data):
    cfg = TrainConfig(steps=30, B=8, seed=4)
    assert train_stage1(cfg, small_data) == train_stage1(cfg, small_data)
    assert train_stage1(cfg, small_data) != train_stage1(TrainConfig(steps=30, B=8, seed=5), small_data)


def test_divergence_reports_step(small_data):
    with pytest.raises(DivergenceError) as err:
        train_stage1(TrainConfig(steps=50, B=8, loss="mse", lr=1e6, clip=0, momentum=0.99,
                                 schedule="constant"), small_data)
    assert 0 < err.value.step < 50


def test_training_improves(small_data):
    model, hist = fit_stage1(TrainConfig(steps=150, B=16), small_data)
    assert hist.loss[-1] < hist.loss[0]
    assert hist.mean_cosine[-1] > hist.mean_cosine[0]
    assert mean_cosine(model, small_data) > 0.5


def test_config_text_round_trip():
    cfg = TrainConfig(steps=7, lr=0.02, loss="hybrid", branch_heads=True)
    assert TrainConfig.from_text(cfg.to_text()) == cfg
    parsed = TrainConfig.from_text("# comment\nsteps = 12\nlambda_cos=0.2\nfusion=concat\n", seed=9)
    assert (parsed.steps, parsed.lam_cos, parsed.fusion, parsed.seed) == (12, 0.2, "concat", 9)
    for bad in ("steps", "nope=1", "steps=x", "loss=l1", "branch_heads=maybe"):
        with pytest.raises(InputError):
            TrainConfig.from_text(bad)


def test_separation_and_smoothing_helpers():
    E = np.array([[1.0, 0], [0, 1.0], [1.0, 0.0001]])
    assert between_class_separation(E, np.array([0, 1, 0])) == pytest.approx(90, abs=0.01)
    assert smoothed(list(range(10)), 5).tolist() == [2.0, 7.0]
