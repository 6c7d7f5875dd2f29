import math

import numpy as np
import pytest

from meetransfer.losses import HSIC, MAE, MEE, MSE
from meetransfer.models import MlpConfig, Model
from meetransfer.synthdata import Dataset, ShiftScenario, gen_source, gen_target
from meetransfer.training import (
    AdamState,
    DivergenceError,
    TrainConfig,
    adam_step,
    compute_bias,
    finetune_mee,
    fit,
    linear_probe_mee,
    pretrain,
    sgd_step,
    transfer,
    write_history_csv,
)


def test_adam_first_step_moves_by_lr():
    # bias-corrected first step is lr * g / (|g| + eps)
    p, s = adam_step({"w": np.array([1.0, -2.0])}, {"w": np.array([0.5, -3.0])}, AdamState(), 0.1)
    np.testing.assert_allclose(p["w"], [0.9, -1.9], atol=1e-8)
    assert s.t == 1


def test_adam_zero_grad_is_noop():
    params = {"w": np.array([0.3])}
    p, _ = adam_step(params, {"w": np.zeros(1)}, AdamState(), 0.1)
    np.testing.assert_array_equal(p["w"], params["w"])


def test_adam_is_pure():
    params = {"w": np.array([1.0]), "frozen": np.array([4.0])}
    state = AdamState()
    p, s = adam_step(params, {"w": np.array([1.0])}, state, 0.01)
    assert params["w"][0] == 1.0 and state.t == 0 and state.m == {}
    assert p["frozen"] is params["frozen"]
    p2, _ = adam_step(params, {"w": np.array([1.0])}, state, 0.01)
    np.testing.assert_array_equal(p["w"], p2["w"])


def test_adam_quadratic_converges():
    params, state = {"w": np.array([5.0, -3.0])}, AdamState()
    for _ in range(3000):
        params, state = adam_step(params, {"w": 2 * params["w"]}, state, 0.05)
    assert np.max(np.abs(params["w"])) < 1e-2


def test_sgd_step():
    p = sgd_step({"w": np.array([1.0])}, {"w": np.array([2.0])}, 0.25)
    np.testing.assert_array_equal(p["w"], [0.5])


def test_config_validation():
    for bad in (dict(epochs=-1), dict(batch_size=0), dict(learning_rate=0.0),
                dict(optimizer="rmsprop"), dict(validation_fraction=1.0)):
        with pytest.raises(ValueError):
            TrainConfig(**bad)
    assert TrainConfig(early_stopping=True).val_fraction == 0.1


def _noise_free(d=5, n=200):
    return gen_source(ShiftScenario(dim=d, n_source=n, noise_enabled=False))


def test_pretrain_mse_matches_least_squares():
    data = _noise_free()
    res = pretrain(data, MSE(), TrainConfig(epochs=600, batch_size=200, learning_rate=0.05))
    w_ls = np.linalg.lstsq(data.X, data.y, rcond=None)[0]
    assert np.mean((res.model.forward(data.X) - data.X @ w_ls) ** 2) < 1e-4
    assert len(res.history) == 600


def test_pretrain_is_deterministic():
    data = gen_source(ShiftScenario(dim=4, n_source=100))
    cfg = TrainConfig(epochs=5, batch_size=32, learning_rate=1e-2, seed=7)
    a = pretrain(data, MEE(1.0), cfg)
    b = pretrain(data, MEE(1.0), cfg)
    np.testing.assert_array_equal(a.model.flat(), b.model.flat())
    assert a.model.bias_b == b.model.bias_b
    assert a.history == b.history


def test_zero_epochs_returns_initial_model():
    data = _noise_free()
    init = Model.linear(5, seed=3)
    res = pretrain(data, MSE(), TrainConfig(epochs=0), model=init)
    np.testing.assert_array_equal(res.model.flat(), init.flat())
    assert res.history == []


def test_fit_leaves_input_untouched():
    data = _noise_free()
    m = Model.linear(5, seed=1)
    before = m.flat().copy()
    fit(m, data, MSE(), TrainConfig(epochs=3, learning_rate=1e-2))
    np.testing.assert_array_equal(m.flat(), before)


def test_mee_entropy_decreases_full_batch():
    data = gen_source(ShiftScenario(dim=10, n_source=120, noise="laplace"))
    res = fit(Model.linear(10, seed=0), data, MEE(1.0),
              TrainConfig(epochs=80, batch_size=120, learning_rate=1e-2))
    h = [r["train_loss"] for r in res.history]
    assert all(b <= a + 1e-3 for a, b in zip(h[10:], h[11:]))
    assert h[-1] < h[0]


def test_pretrain_mee_sets_mean_residual_bias():
    data = gen_source(ShiftScenario(dim=6, n_source=150, noise="shifted_exponential"))
    res = pretrain(data, MEE(1.0), TrainConfig(epochs=20, learning_rate=1e-2))
    assert abs(np.mean(data.y - res.model.forward(data.X))) <= 1e-9
    # mse is not translation invariant, so no correction by default
    assert pretrain(data, MSE(), TrainConfig(epochs=2)).model.bias_b == 0.0


def test_divergence_is_reported():
    data = _noise_free()
    data = Dataset(data.X * 1e200, data.y * 1e200)
    with pytest.raises(DivergenceError), np.errstate(over="ignore", invalid="ignore"):
        fit(Model.linear(5), data, MSE(), TrainConfig(epochs=2, optimizer="sgd", learning_rate=1.0))


def test_early_stopping_restores_best():
    data = gen_source(ShiftScenario(dim=5, n_source=100))
    base = dict(epochs=30, learning_rate=0.3, validation_fraction=0.2)
    stopped = fit(Model.linear(5), data, MSE(), TrainConfig(early_stopping=True, **base))
    plain = fit(Model.linear(5), data, MSE(), TrainConfig(**base))
    vals = [r["val_loss"] for r in plain.history]
    assert vals == [r["val_loss"] for r in stopped.history]
    best = int(np.argmin(vals)) + 1
    # replay the same run up to the best epoch
    replay = fit(Model.linear(5), data, MSE(), TrainConfig(**{**base, "epochs": best}))
    np.testing.assert_array_equal(stopped.model.flat(), replay.model.flat())


def test_compute_bias_examples():
    m = Model.linear(1)
    m.w[:] = 0.0
    d = Dataset(np.zeros((3, 1)), np.array([1.0, 2.0, 6.0]))
    assert compute_bias(m, d) == 3.0
    with pytest.raises(ValueError):
        compute_bias(m, Dataset(np.zeros((0, 1)), np.zeros(0)))


def _transfer_setup(kind="linear"):
    sc = ShiftScenario(dim=6, n_source=200, n_target_train=60, noise="shifted_exponential")
    src = gen_source(sc)
    mlp = MlpConfig((4,))
    model = pretrain(src, MSE(), TrainConfig(epochs=20, learning_rate=1e-2), kind=kind, mlp=mlp).model
    return model.set_bias(0.7), gen_target(sc, 2.0, role="target_train")


@pytest.mark.parametrize("kind", ["linear", "mlp"])
def test_transfer_bias_contract(kind):
    src_model, tgt = _transfer_setup(kind)
    cfg = TrainConfig(epochs=10, batch_size=32, learning_rate=1e-3)
    for proc in (finetune_mee, linear_probe_mee):
        r = proc(tgt, src_model, cfg)
        raw = r.model.set_bias(0.0)
        pre = np.mean(tgt.y - raw.forward(tgt.X))
        assert abs(r.model.bias_b - pre) <= 1e-9
        assert abs(np.mean(tgt.y - r.model.forward(tgt.X))) <= 1e-9
        assert r.sigma_used > 0 and not r.degenerate
        np.testing.assert_array_equal(r.source_snapshot, src_model.flat())


def test_probe_freezes_theta_bitwise():
    src_model, tgt = _transfer_setup("mlp")
    r = linear_probe_mee(tgt, src_model, TrainConfig(epochs=5, batch_size=16, learning_rate=1e-2))
    for a, b in zip(r.model.theta, src_model.theta):
        np.testing.assert_array_equal(a, b)
    assert not np.array_equal(r.model.w, src_model.w)
    f = finetune_mee(tgt, src_model, TrainConfig(epochs=5, batch_size=16, learning_rate=1e-2))
    assert not np.array_equal(f.model.theta[0], src_model.theta[0])


def test_probe_equals_finetune_for_linear_model():
    src_model, tgt = _transfer_setup("linear")
    cfg = TrainConfig(epochs=5, batch_size=16, learning_rate=1e-2)
    a, b = linear_probe_mee(tgt, src_model, cfg), finetune_mee(tgt, src_model, cfg)
    np.testing.assert_array_equal(a.model.flat(), b.model.flat())
    assert a.model.bias_b == b.model.bias_b


def test_sigma_from_median_rule_on_source_residuals():
    from meetransfer.kernels import median_rule

    src_model, tgt = _transfer_setup()
    r = finetune_mee(tgt, src_model, TrainConfig(epochs=1))
    assert r.sigma_used == median_rule(src_model.set_bias(0.0).residuals(tgt.X, tgt.y))


def test_degenerate_path():
    m = Model.linear(3)
    X = np.random.default_rng(0).normal(size=(10, 3))
    tgt = Dataset(X, m.forward(X) + 2.5)
    r = finetune_mee(tgt, m, TrainConfig(epochs=3))
    assert r.degenerate and r.sigma_used is None and r.train_history == []
    np.testing.assert_array_equal(r.model.flat(), m.flat())
    assert r.model.bias_b == pytest.approx(2.5, abs=1e-12)
    # a floor turns the degenerate case into a normal run
    r2 = finetune_mee(tgt, m, TrainConfig(epochs=2), sigma_floor=1e-3)
    assert not r2.degenerate and r2.sigma_used == 1e-3


def test_transfer_dimension_mismatch():
    with pytest.raises(ValueError):
        transfer(Dataset(np.zeros((4, 2)), np.zeros(4)), Model.linear(3), MAE(), TrainConfig(epochs=1))


def test_transfer_with_hsic_and_bias_flag():
    src_model, tgt = _transfer_setup()
    X = tgt.X
    r = transfer(tgt, src_model, HSIC(), TrainConfig(epochs=2, batch_size=30), bias_correction=False)
    assert r.model.bias_b == 0.0 and not r.bias_applied
    assert r.model.d == X.shape[1]


def test_history_csv(tmp_path):
    p = tmp_path / "h.csv"
    write_history_csv([{"epoch": 1, "train_loss": 0.5, "val_loss": math.nan}], p)
    lines = p.read_text().splitlines()
    assert lines[0] == "epoch,train_loss,val_loss" and lines[1] == "1,0.5,nan"
