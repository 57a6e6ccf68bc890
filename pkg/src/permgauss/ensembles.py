"""Bias-free dense ReLU networks trained with Adam, snapshotting square layers each epoch."""

from __future__ import annotations

import logging
import multiprocessing as mp
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .dataio import Dataset, SnapshotStore

log = logging.getLogger(__name__)

DEFAULT_LAYERS = (784, 10, 10, 10, 10)
WIDTHS = (10, 40, 160, 640)


class RunDiverged(RuntimeError):
    def __init__(self, run_index: int, epoch: int):
        super().__init__(f"run {run_index} diverged in epoch {epoch}")
        self.run_index = run_index
        self.epoch = epoch


class EnsembleError(RuntimeError):
    def __init__(self, failures: Sequence[RunDiverged]):
        super().__init__("diverged runs: " + ", ".join(str(f.run_index) for f in failures))
        self.failures = list(failures)


def width_layers(alpha: int, n_in: int = 784, n_out: int = 10) -> tuple[int, ...]:
    return (n_in, alpha, alpha, n_out)


@dataclass
class NetConfig:
    layer_sizes: tuple = DEFAULT_LAYERS
    scheme: str = "gaussian"
    lr: float = 0.01
    batch: int = 100
    epochs: int = 50
    l2_lambda: float = 0.0
    runs: int = 1
    master_seed: int = 0
    analyzed_layers: tuple | None = None
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8

    def __post_init__(self):
        self.layer_sizes = tuple(int(s) for s in self.layer_sizes)
        if len(self.layer_sizes) < 2 or min(self.layer_sizes) < 1:
            raise ValueError("layer sizes must be positive and describe at least one layer")
        if self.scheme not in ("gaussian", "uniform"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.lr <= 0 or self.batch < 1 or self.epochs < 0 or self.l2_lambda < 0:
            raise ValueError("need lr > 0, batch >= 1, epochs >= 0, l2_lambda >= 0")
        shapes = self.weight_shapes
        if self.analyzed_layers is None:
            self.analyzed_layers = tuple(k for k, (r, c) in enumerate(shapes) if r == c)
        self.analyzed_layers = tuple(int(k) for k in self.analyzed_layers)
        for k in self.analyzed_layers:
            r, c = shapes[k]
            if r != c:
                raise ValueError(f"layer {k} has shape {r}x{c}; only square layers can be analyzed")
        if len({shapes[k] for k in self.analyzed_layers}) > 1:
            raise ValueError("analyzed layers must share one dimension")

    @property
    def weight_shapes(self) -> list[tuple[int, int]]:
        s = self.layer_sizes
        return [(s[k + 1], s[k]) for k in range(len(s) - 1)]

    @property
    def d(self) -> int:
        return self.weight_shapes[self.analyzed_layers[0]][0] if self.analyzed_layers else 0


@dataclass
class AdamState:
    m: list
    v: list
    step: int = 0
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, weights, betas=(0.9, 0.999), eps=1e-8) -> "AdamState":
        return cls([np.zeros_like(w) for w in weights], [np.zeros_like(w) for w in weights], 0, betas, eps)


def run_seed(master_seed: int, run_index: int) -> np.random.SeedSequence:
    """Independent, individually reproducible stream for each run."""
    return np.random.SeedSequence([int(master_seed), int(run_index)])


def init_weights(scheme: str, rows: int, cols: int, fan_in: int, rng: np.random.Generator) -> np.ndarray:
    if rows < 1 or cols < 1 or fan_in < 1:
        raise ValueError("dimensions and fan-in must be positive")
    if scheme == "gaussian":
        return rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(rows, cols))
    if scheme == "uniform":
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=(rows, cols))
    raise ValueError(f"unknown scheme {scheme!r}")


def init_net(config: NetConfig, rng: np.random.Generator) -> list[np.ndarray]:
    return [init_weights(config.scheme, r, c, c, rng) for r, c in config.weight_shapes]


def _check_input(weights, x):
    if x.ndim != 2 or x.shape[1] != weights[0].shape[1]:
        raise ValueError(f"input of shape {x.shape} does not match first layer fan-in {weights[0].shape[1]}")


def forward(weights: Sequence[np.ndarray], x: np.ndarray) -> np.ndarray:
    """Logits of a batch; ReLU after every layer but the last."""
    _check_input(weights, x)
    h = x
    for W in weights[:-1]:
        h = np.maximum(h @ W.T, 0.0)
    return h @ weights[-1].T


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def loss_ce(logits: np.ndarray, labels: np.ndarray, l2_lambda: float = 0.0, weights=None) -> float:
    """Mean softmax cross-entropy plus ``l2_lambda`` times the sum of squared weights."""
    logits = np.asarray(logits, dtype=float)
    labels = np.asarray(labels)
    if logits.shape[0] != labels.shape[0]:
        raise ValueError("logits and labels disagree on batch size")
    if np.isnan(logits).any():
        raise FloatingPointError("NaN in logits")
    ce = -_log_softmax(logits)[np.arange(len(labels)), labels].mean()
    if l2_lambda and weights is not None:
        ce += l2_lambda * sum(float((W * W).sum()) for W in weights)
    return float(ce)


def grad(weights: Sequence[np.ndarray], x: np.ndarray, labels: np.ndarray, l2_lambda: float = 0.0):
    """Loss and exact gradient with respect to every weight matrix."""
    _check_input(weights, x)
    acts = [x]
    h = x
    for W in weights[:-1]:
        h = np.maximum(h @ W.T, 0.0)
        acts.append(h)
    logits = h @ weights[-1].T
    loss = loss_ce(logits, labels, l2_lambda, weights)
    if not np.isfinite(loss):
        raise FloatingPointError("non-finite loss")

    n = len(labels)
    delta = np.exp(_log_softmax(logits))
    delta[np.arange(n), labels] -= 1.0
    delta /= n
    grads = [None] * len(weights)
    for k in range(len(weights) - 1, -1, -1):
        grads[k] = delta.T @ acts[k]
        if k:
            delta = (delta @ weights[k]) * (acts[k] > 0)
    if l2_lambda:
        grads = [g + 2.0 * l2_lambda * W for g, W in zip(grads, weights)]
    return loss, grads


def adam_step(weights, grads, opt: AdamState, lr: float):
    """One bias-corrected Adam update, in place; returns (weights, opt)."""
    if len(weights) != len(grads) or any(w.shape != g.shape for w, g in zip(weights, grads)):
        raise ValueError("gradient shapes do not match weights")
    b1, b2 = opt.betas
    opt.step += 1
    c1 = 1.0 - b1 ** opt.step
    c2 = 1.0 - b2 ** opt.step
    for W, g, m, v in zip(weights, grads, opt.m, opt.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        W -= lr * (m / c1) / (np.sqrt(v / c2) + opt.eps)
    return weights, opt


def accuracy(weights, x: np.ndarray, labels: np.ndarray, chunk: int = 10000) -> float:
    hits = 0
    for s in range(0, len(labels), chunk):
        hits += int((forward(weights, x[s:s + chunk]).argmax(axis=1) == labels[s:s + chunk]).sum())
    return hits / len(labels)


@dataclass
class RunResult:
    run_index: int
    snapshots: np.ndarray  # (layers, epochs + 1, d, d)
    accuracies: np.ndarray  # (epochs + 1,)
    losses: list = field(default_factory=list)


def train_run(config: NetConfig, data: Dataset, run_index: int) -> RunResult:
    rng = np.random.default_rng(run_seed(config.master_seed, run_index))
    weights = init_net(config, rng)
    opt = AdamState.zeros_like(weights, config.betas, config.eps)
    layers = config.analyzed_layers
    snaps = np.empty((len(layers), config.epochs + 1, config.d, config.d))
    accs = np.empty(config.epochs + 1)
    losses = []

    def snapshot(epoch):
        for j, k in enumerate(layers):
            snaps[j, epoch] = weights[k]
        accs[epoch] = accuracy(weights, data.test_x, data.test_y)

    snapshot(0)
    n = len(data.train_y)
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for s in range(0, n, config.batch):
            idx = order[s:s + config.batch]
            try:
                loss, grads = grad(weights, data.train_x[idx], data.train_y[idx], config.l2_lambda)
            except FloatingPointError:
                raise RunDiverged(run_index, epoch) from None
            total += loss * len(idx)
            adam_step(weights, grads, opt, config.lr)
        if not all(np.isfinite(W).all() for W in weights):
            raise RunDiverged(run_index, epoch)
        losses.append(total / n)
        snapshot(epoch)
        log.debug("run %d epoch %d loss %.4f acc %.4f", run_index, epoch, losses[-1], accs[epoch])
    return RunResult(run_index, snaps, accs, losses)


_SHARED: dict = {}


def _worker(args):
    config, run_index = args
    try:
        return train_run(config, _SHARED["data"], run_index)
    except RunDiverged as exc:
        return exc


def generate_ensemble(config: NetConfig, data: Dataset, workers: int = 1,
                      progress: Callable[[RunResult], None] | None = None,
                      strict: bool = False) -> SnapshotStore:
    """Train ``config.runs`` networks and collect their snapshots in run order.

    Diverged runs are left out of the store and listed in ``meta["diverged"]``;
    with ``strict`` an :class:`EnsembleError` is raised instead.
    """
    jobs = [(config, r) for r in range(config.runs)]
    if workers > 1 and config.runs > 1:
        _SHARED["data"] = data
        ctx = mp.get_context("fork")
        with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
            outcomes = list(pool.map(_worker, jobs))
        _SHARED.clear()
    else:
        outcomes = []
        for cfg, r in jobs:
            try:
                outcomes.append(train_run(cfg, data, r))
            except RunDiverged as exc:
                outcomes.append(exc)
            if progress and isinstance(outcomes[-1], RunResult):
                progress(outcomes[-1])

    good = [o for o in outcomes if isinstance(o, RunResult)]
    bad = [o for o in outcomes if isinstance(o, RunDiverged)]
    if bad:
        log.warning("excluded diverged runs: %s", [b.run_index for b in bad])
        if strict:
            raise EnsembleError(bad)
    good.sort(key=lambda o: o.run_index)
    d = config.d
    L = len(config.analyzed_layers)
    mats = np.stack([o.snapshots for o in good]) if good else np.empty((0, L, config.epochs + 1, d, d))
    accs = np.stack([o.accuracies for o in good]) if good else np.empty((0, config.epochs + 1))
    meta = {
        "layer_sizes": list(config.layer_sizes),
        "analyzed_layers": list(config.analyzed_layers),
        "l2_lambda": config.l2_lambda,
        "lr": config.lr,
        "batch": config.batch,
        "fan_in": d,
        "run_indices": [o.run_index for o in good],
        "diverged": [b.run_index for b in bad],
    }
    return SnapshotStore(
        scheme=config.scheme,
        regularized=config.l2_lambda > 0,
        d=d,
        layer_count=L,
        epochs=config.epochs,
        runs=len(good),
        matrices=mats,
        accuracies=accs,
        master_seed=config.master_seed,
        meta=meta,
    )
