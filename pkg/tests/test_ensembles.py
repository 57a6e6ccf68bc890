import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import central_difference
from permgauss import ensembles
from permgauss.ensembles import (
    AdamState,
    EnsembleError,
    NetConfig,
    RunDiverged,
    adam_step,
    forward,
    generate_ensemble,
    grad,
    init_weights,
    loss_ce,
    train_run,
    width_layers,
)


@pytest.mark.parametrize("fan_in", [10, 784])
def test_gaussian_init_variance(fan_in, rng):
    W = init_weights("gaussian", 200, fan_in, fan_in, rng)
    n = W.size
    assert abs(W.mean()) < 3 * np.sqrt(1 / fan_in / n)
    assert abs(W.var() - 1 / fan_in) < 3 * np.sqrt(2 / n) / fan_in


def test_uniform_init_bounds_and_variance(rng):
    W = init_weights("uniform", 300, 300, 10, rng)
    bound = 1 / np.sqrt(10)
    assert np.all(np.abs(W) <= bound)
    # Var U(-b, b) = b^2 / 3; fourth central moment b^4 / 5
    se = np.sqrt((bound**4 / 5 - (bound**2 / 3) ** 2) / W.size)
    assert abs(W.var() - bound**2 / 3) < 3 * se


def test_init_deterministic_and_validated():
    a = init_weights("uniform", 4, 4, 4, np.random.default_rng(1))
    b = init_weights("uniform", 4, 4, 4, np.random.default_rng(1))
    np.testing.assert_array_equal(a, b)
    with pytest.raises(ValueError):
        init_weights("gaussian", 4, 4, 0, np.random.default_rng(1))
    with pytest.raises(ValueError):
        init_weights("laplace", 4, 4, 4, np.random.default_rng(1))


def test_forward_zero_and_passthrough(rng):
    x = rng.uniform(size=(3, 5))
    zeros = [np.zeros((4, 5)), np.zeros((2, 4))]
    np.testing.assert_array_equal(forward(zeros, x), np.zeros((3, 2)))
    # positive inputs through identity layers survive every ReLU
    eye = [np.eye(5), np.eye(5), np.eye(5)]
    np.testing.assert_array_equal(forward(eye, x), x)
    with pytest.raises(ValueError):
        forward(eye, rng.uniform(size=(3, 4)))


def test_forward_per_neuron_loop(rng):
    Ws = [rng.normal(size=(4, 6)), rng.normal(size=(4, 4)), rng.normal(size=(3, 4))]
    x = rng.normal(size=(2, 6))
    for b in range(2):
        h = list(x[b])
        for k, W in enumerate(Ws):
            h = [sum(W[i, j] * h[j] for j in range(len(h))) for i in range(W.shape[0])]
            if k < len(Ws) - 1:
                h = [max(v, 0.0) for v in h]
        np.testing.assert_allclose(forward(Ws, x)[b], h, rtol=1e-12)


def test_loss_values():
    assert loss_ce(np.zeros((4, 10)), np.arange(4)) == pytest.approx(np.log(10), rel=1e-14)
    big = np.zeros((1, 10))
    big[0, 3] = 50.0
    assert loss_ce(big, np.array([3])) < 1e-20
    logits = np.array([[1.0, 2.0, 0.5], [0.0, -1.0, 3.0]])
    y = np.array([1, 0])
    p = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
    assert loss_ce(logits, y) == pytest.approx(-np.log(p[[0, 1], y]).mean(), rel=1e-14)
    W = [np.ones((2, 2))]
    assert loss_ce(logits, y, 0.1, W) == pytest.approx(loss_ce(logits, y) + 0.4, rel=1e-14)


def test_loss_errors():
    with pytest.raises(FloatingPointError):
        loss_ce(np.full((1, 3), np.nan), np.array([0]))
    with pytest.raises(ValueError):
        loss_ce(np.zeros((2, 3)), np.array([0]))


def test_adam_zero_gradient_leaves_weights():
    W = [np.arange(4.0).reshape(2, 2)]
    opt = AdamState.zeros_like(W)
    adam_step(W, [np.zeros((2, 2))], opt, 0.01)
    np.testing.assert_array_equal(W[0], np.arange(4.0).reshape(2, 2))
    assert opt.step == 1


def test_adam_constant_gradient_moves_by_lr():
    W = [np.zeros((2, 2))]
    g = np.array([[1.0, -2.0], [0.5, -0.1]])
    opt = AdamState.zeros_like(W)
    for step in range(1, 6):
        before = W[0].copy()
        adam_step(W, [g], opt, 0.01)
        # bias correction makes every step ~ lr * sign(g) for a constant gradient
        np.testing.assert_allclose(before - W[0], 0.01 * np.sign(g), rtol=1e-6)


def test_adam_hand_formula(rng):
    W0 = rng.normal(size=(2, 2))
    g1, g2 = rng.normal(size=(2, 2)), rng.normal(size=(2, 2))
    W = [W0.copy()]
    opt = AdamState.zeros_like(W)
    adam_step(W, [g1], opt, 0.05)
    adam_step(W, [g2], opt, 0.05)
    b1, b2, eps, lr = 0.9, 0.999, 1e-8, 0.05
    m1, v1 = (1 - b1) * g1, (1 - b2) * g1**2
    x1 = W0 - lr * (m1 / (1 - b1)) / (np.sqrt(v1 / (1 - b2)) + eps)
    m2, v2 = b1 * m1 + (1 - b1) * g2, b2 * v1 + (1 - b2) * g2**2
    x2 = x1 - lr * (m2 / (1 - b1**2)) / (np.sqrt(v2 / (1 - b2**2)) + eps)
    np.testing.assert_allclose(W[0], x2, rtol=0, atol=1e-15)


def test_adam_shape_mismatch():
    W = [np.zeros((2, 2))]
    with pytest.raises(ValueError):
        adam_step(W, [np.zeros((2, 3))], AdamState.zeros_like(W), 0.1)


def max_relative_error(weights, x, y, lam, coords, rng):
    _, grads = grad(weights, x, y, lam)
    worst = 0.0
    for _ in range(coords):
        k = rng.integers(len(weights))
        i, j = (rng.integers(n) for n in weights[k].shape)
        numeric, analytic = central_difference(weights, x, y, lam, k, i, j), grads[k][i, j]
        scale = max(abs(numeric), abs(analytic))
        if scale:
            worst = max(worst, abs(numeric - analytic) / scale)
    return worst


@pytest.mark.parametrize("lam", [0.0, 0.01])
def test_gradient_matches_finite_differences(lam, rng, tiny_data):
    cfg = NetConfig(scheme="gaussian")
    weights = ensembles.init_net(cfg, rng)
    x, y = tiny_data.train_x[:16], tiny_data.train_y[:16]
    assert max_relative_error(weights, x, y, lam, 60, rng) < 1e-5


def test_gradient_duplicate_batch_unchanged(rng):
    weights = [rng.normal(size=(5, 6)), rng.normal(size=(3, 5))]
    x, y = rng.normal(size=(4, 6)), np.array([0, 1, 2, 0])
    l1, g1 = grad(weights, x, y)
    l2, g2 = grad(weights, np.vstack([x, x]), np.concatenate([y, y]))
    assert l1 == pytest.approx(l2, rel=1e-14)
    for a, b in zip(g1, g2):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-15)


def test_gradient_weight_decay_term(rng):
    weights = [rng.normal(size=(5, 6)), rng.normal(size=(3, 5))]
    x, y = rng.normal(size=(4, 6)), np.array([0, 1, 2, 0])
    _, g0 = grad(weights, x, y)
    _, g1 = grad(weights, x, y, 0.3)
    for a, b, W in zip(g0, g1, weights):
        np.testing.assert_allclose(b - a, 0.6 * W, rtol=1e-12)


def test_netconfig_validation():
    cfg = NetConfig()
    assert cfg.analyzed_layers == (1, 2, 3) and cfg.d == 10
    assert NetConfig(layer_sizes=width_layers(40)).analyzed_layers == (1,)
    assert width_layers(40) == (784, 40, 40, 10)
    with pytest.raises(ValueError):
        NetConfig(analyzed_layers=(0,))
    with pytest.raises(ValueError):
        NetConfig(scheme="laplace")
    with pytest.raises(ValueError):
        NetConfig(lr=0)
    with pytest.raises(ValueError):
        NetConfig(layer_sizes=(784, 10, 10, 20, 20, 10), analyzed_layers=(1, 3))


def test_epoch_zero_only(tiny_data):
    cfg = NetConfig(epochs=0)
    r = train_run(cfg, tiny_data, 0)
    assert r.snapshots.shape == (3, 1, 10, 10)
    assert r.accuracies.shape == (1,) and r.losses == []


def test_training_deterministic_and_learns(tiny_data):
    cfg = NetConfig(epochs=3, batch=50)
    a = train_run(cfg, tiny_data, 4)
    b = train_run(cfg, tiny_data, 4)
    np.testing.assert_array_equal(a.snapshots, b.snapshots)
    np.testing.assert_array_equal(a.accuracies, b.accuracies)
    assert a.losses[-1] < a.losses[0]
    assert a.accuracies[-1] > 0.5
    assert not np.array_equal(train_run(cfg, tiny_data, 5).snapshots[:, 0], a.snapshots[:, 0])


def test_ensemble_matches_individual_runs(tiny_data):
    cfg = NetConfig(epochs=1, runs=2, batch=100, master_seed=3)
    store = generate_ensemble(cfg, tiny_data)
    assert store.matrices.shape == (2, 3, 2, 10, 10)
    for r in range(2):
        np.testing.assert_array_equal(store.matrices[r], train_run(cfg, tiny_data, r).snapshots)
    parallel = generate_ensemble(cfg, tiny_data, workers=2)
    assert parallel.equals(store)


@settings(max_examples=5, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_epoch_zero_matches_init_distribution(seed):
    cfg = NetConfig(epochs=0, master_seed=seed)
    from permgauss.dataio import Dataset

    empty = Dataset(np.zeros((1, 784)), np.zeros(1, int), np.zeros((1, 784)), np.zeros(1, int))
    W = np.stack([train_run(cfg, empty, r).snapshots[:, 0] for r in range(30)])
    # 9000 N(0, 1/10) entries
    assert abs(W.var() - 0.1) < 4 * 0.1 * np.sqrt(2 / W.size)


def test_diverged_runs_excluded(tiny_data, monkeypatch):
    real = ensembles.train_run

    def flaky(config, data, run_index):
        if run_index == 1:
            raise RunDiverged(run_index, 1)
        return real(config, data, run_index)

    monkeypatch.setattr(ensembles, "train_run", flaky)
    cfg = NetConfig(epochs=1, runs=3)
    store = generate_ensemble(cfg, tiny_data)
    assert store.runs == 2 and store.meta["diverged"] == [1] and store.meta["run_indices"] == [0, 2]
    with pytest.raises(EnsembleError):
        generate_ensemble(cfg, tiny_data, strict=True)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_huge_learning_rate_diverges(tiny_data):
    with pytest.raises(RunDiverged):
        train_run(NetConfig(epochs=1, lr=1e80), tiny_data, 0)
