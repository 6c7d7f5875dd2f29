import numpy as np
import pytest
from scipy import stats

from meetransfer.synthdata import (
    ShiftScenario,
    gen_source,
    gen_target,
    mixed_gaussian_tail_prob,
    sample_noise,
)


def test_source_support_and_shape():
    sc = ShiftScenario(dim=7, n_source=300)
    d = gen_source(sc)
    assert d.X.shape == (300, 7) and d.y.shape == (300,)
    assert d.X.min() >= -1.0 and d.X.max() <= 1.0


def test_noise_disabled_is_exactly_linear():
    sc = ShiftScenario(dim=5, n_source=50, noise_enabled=False)
    d = gen_source(sc)
    np.testing.assert_array_equal(d.y, d.X @ sc.theta_true)
    t = gen_target(sc, 1.5, n=40)
    np.testing.assert_array_equal(t.y, t.X @ sc.theta_true)


def test_target_column_means():
    sc = ShiftScenario(dim=10)
    X = gen_target(sc, 2.0, n=20000).X
    # standard error of each column mean is 1/sqrt(n)
    assert np.all(np.abs(X.mean(axis=0) - 2.0) < 5 / np.sqrt(20000))
    assert np.all(np.abs(X.std(axis=0) - 1.0) < 0.05)


def test_noise_moments():
    n = 200_000
    lap = sample_noise("laplace", n, 0)
    assert abs(lap.mean()) < 5 * np.sqrt(2 / n)
    assert abs(lap.var() - 2.0) < 0.05
    ex = sample_noise("shifted_exponential", n, 1)
    assert ex.min() >= -1.0
    assert abs(ex.mean()) < 5 / np.sqrt(n)
    mg = sample_noise("mixed_gaussian", n, 2)
    # variance 0.95 * 0.01 + 0.05 * 100
    assert abs(mg.var() - 5.0095) / 5.0095 < 0.05


def test_mixed_tail_probability():
    n = 1_000_000
    e = sample_noise("mixed_gaussian", n, 3)
    p = mixed_gaussian_tail_prob(1.0)
    se = np.sqrt(p * (1 - p) / n)
    assert abs(np.mean(np.abs(e) > 1.0) - p) < 3 * se
    # independent oracle of the same quantity
    oracle = 0.95 * 2 * stats.norm.sf(1.0, scale=0.1) + 0.05 * 2 * stats.norm.sf(1.0, scale=10.0)
    assert p == pytest.approx(oracle, rel=1e-12)


def test_unknown_noise():
    with pytest.raises(ValueError):
        sample_noise("cauchy", 3)
    with pytest.raises(ValueError):
        ShiftScenario(noise="cauchy")


def test_least_squares_recovers_theta_without_noise():
    sc = ShiftScenario(dim=20, n_source=200, noise_enabled=False)
    d = gen_source(sc)
    w = np.linalg.lstsq(d.X, d.y, rcond=None)[0]
    assert np.max(np.abs(w - sc.theta_true)) < 1e-8


def test_reproducible_and_keyed():
    sc = ShiftScenario(dim=4, n_source=30, n_target=30)
    a, b = gen_source(sc, rep=3), gen_source(sc, rep=3)
    np.testing.assert_array_equal(a.X, b.X)
    np.testing.assert_array_equal(a.y, b.y)
    assert not np.array_equal(gen_source(sc, rep=4).X, a.X)
    tt = gen_target(sc, 1.0, role="target_train", n=30)
    te = gen_target(sc, 1.0, role="target_test", n=30)
    assert not np.array_equal(tt.X, te.X)
    assert not np.array_equal(ShiftScenario(seed=1).theta_true, ShiftScenario(seed=0).theta_true)
    with pytest.raises(ValueError):
        gen_target(sc, 1.0, role="source")


def test_theta_scale():
    th = ShiftScenario(dim=10_000).theta_true
    assert abs(th.std() - 0.1) < 0.005


def test_shift_increases_fixed_model_error():
    sc = ShiftScenario(dim=30, n_target=4000)
    # a fixed, slightly wrong model degrades as the inputs move away from 0
    w = sc.theta_true + 0.05
    errs = []
    for mu in (0.0, 1.0, 2.0, 3.0):
        t = gen_target(sc, mu)
        errs.append(np.mean((t.y - t.X @ w) ** 2))
    assert all(a < b for a, b in zip(errs, errs[1:]))
