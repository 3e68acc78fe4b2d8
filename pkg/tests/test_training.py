import numpy as np
import pytest

from dualflow import datasets as ds
from dualflow import recipes
from dualflow.flow_model import (AttentionField, DenseField, GaussianTarget, TrainConfig,
                                 TrainingDiverged, grad_check, rf_loss, train)


class Const:
    state_dim = 2

    def __init__(self, v):
        self.v = np.asarray(v, dtype=float)

    def velocity(self, x, t, cond=0):
        return np.broadcast_to(self.v, np.shape(x))


def test_rf_loss_exact_values():
    batch = (np.zeros((1, 2)), np.array([[3.0, 4.0]]), np.array([1]))
    assert rf_loss(Const([3.0, 4.0]), batch, [0.1, 0.5]) == 0.0
    assert rf_loss(Const([0.0, 0.0]), batch, [0.2]) == 25.0
    assert rf_loss(Const([0.0, 0.0]), [((0.0, 0.0), (3.0, 4.0), 1)], [0.9]) == 25.0


def test_rf_loss_matches_two_loop_sum(rng):
    f = DenseField(2, hidden=(16,), seed=3)
    x0, x1 = rng.normal(size=(16, 2)), rng.normal(size=(16, 2))
    cond = rng.integers(0, 4, size=16)
    ts = rng.uniform(size=4)
    total = 0.0
    for t in ts:
        for i in range(16):
            xt = t * x1[i] + (1 - t) * x0[i]
            r = (x1[i] - x0[i]) - f.velocity(xt, t, cond[i])
            total += r @ r
    assert rf_loss(f, ds.PairSet(x0, x1, cond), ts) == pytest.approx(total / 64, rel=1e-12)


def test_rf_loss_errors():
    with pytest.raises(ValueError):
        rf_loss(Const([0, 0]), (np.zeros((1, 2)), np.zeros((1, 3)), np.array([0])), [0.5])
    with pytest.raises(ValueError):
        rf_loss(Const([0, 0]), (np.zeros((1, 2)), np.zeros((1, 2)), np.array([0])), [])


def test_single_pair_is_fit():
    pairs = ds.PairSet(np.array([[0.3, -1.2]]), np.array([[1.0, 2.0]]), np.array([1]))
    res = train(DenseField(2, hidden=(32, 32), seed=1), pairs,
                TrainConfig(steps=2000, batch_size=16, resample_noise=False, seed=1))
    assert res.trailing_loss() < 1e-3


def test_zero_steps_is_identity():
    f = DenseField(2, hidden=(8,), seed=5)
    pairs = ds.make_pairs(np.ones((4, 2)), 1, seed=0)
    g = train(f, pairs, TrainConfig(steps=0)).field
    assert all(np.array_equal(f.params[k], g.params[k]) for k in f.params)


def test_training_is_deterministic():
    pairs = ds.make_pairs(ds.sample_2d(ds.two_moons(), 256, 0), 1, seed=1)
    cfg = TrainConfig(steps=30, batch_size=32, seed=2, cond_dropout=0.2)
    a = train(DenseField(2, hidden=(16,)), pairs, cfg)
    b = train(DenseField(2, hidden=(16,)), pairs, cfg)
    assert np.array_equal(a.history, b.history)


def test_sgd_and_bad_optimizer():
    pairs = ds.make_pairs(np.ones((8, 2)), 1, seed=0)
    res = train(DenseField(2, hidden=(8,)), pairs,
                TrainConfig(steps=50, batch_size=8, optimizer="sgd", lr=1e-2))
    assert res.history[-10:].mean() < res.history[:10].mean()
    with pytest.raises(ValueError):
        train(DenseField(2, hidden=(8,)), pairs, TrainConfig(optimizer="rmsprop"))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_is_reported():
    pairs = ds.make_pairs(np.full((8, 2), 1e200), 1, seed=0)
    with pytest.raises(TrainingDiverged):
        train(DenseField(2, hidden=(8,)), pairs, TrainConfig(steps=5, batch_size=8))


def test_linear_gradient_is_least_squares(rng):
    f = DenseField(2, hidden=(), seed=1)
    x, target = rng.normal(size=(6, 2)), rng.normal(size=(6, 2))
    t, cond = rng.uniform(size=6), rng.integers(0, 3, size=6)
    _, grads = f.loss_and_grad(x, t, cond, target)
    inp = f._inputs(x, t, cond)
    resid = inp @ f.params["W0"] + f.params["b0"] - target
    np.testing.assert_allclose(grads["W0"], 2 * inp.T @ resid / 6, rtol=0, atol=1e-10)
    np.testing.assert_allclose(grads["b0"], 2 * resid.sum(axis=0) / 6, rtol=0, atol=1e-10)


def test_grad_check_fresh_fields(rng):
    x, y = rng.normal(size=(3, 2)), rng.normal(size=(3, 2))
    assert grad_check(DenseField(2), x, 0.4, 1, y) < 1e-4
    xa, ya = rng.normal(size=(1, 256)), rng.normal(size=(1, 256))
    assert grad_check(AttentionField(seed=7), xa, 0.6, 12, ya) < 1e-3


def gaussian_floor(n=200_000):
    # per-dim minimum of E|(x1-x0) - E[x1-x0 | x_t]|^2 for x1, x0 ~ N(0, 1), t ~ U(0, 1)
    t = (np.arange(n) + 0.5) / n
    return 2.0 * np.mean(2.0 - (2 * t - 1) ** 2 / (t ** 2 + (1 - t) ** 2))


def test_independent_coupling_has_a_loss_floor():
    oracle = GaussianTarget({1: (np.zeros(2), 1.0)})
    pairs = ds.make_pairs(ds.sample_2d(ds.gaussian(), 20_000, 1), 1, seed=2)
    ts = (np.arange(64) + 0.5) / 64
    best = rf_loss(oracle, pairs, ts)
    zero = rf_loss(Const([0.0, 0.0]), pairs, ts)
    assert best == pytest.approx(gaussian_floor(), rel=0.02)
    # even the exact field keeps ~79% of the zero-field loss
    assert best / zero > 0.75


def test_moons_loss_regression(moons_run):
    h = moons_run
    assert h.trailing_loss() < 0.85 * h.trailing_loss(start=True)
    assert h.trailing_loss() < 0.65 * h.history[0]
