"""Exact model expectations of invariants via set partitions and Isserlis' theorem.

An invariant sums a product of entries over all index tuples.  Grouping the
tuples by which indices coincide gives one term per set partition of the
graph's nodes: the count of tuples realising a partition with b blocks is the
falling factorial d(d-1)...(d-b+1), and every such tuple has the same moment
because the model is permutation invariant.
"""

from __future__ import annotations

from collections import Counter
from functools import lru_cache
from itertools import product

import numpy as np

from .invariants import eval_all, invariant
from .pigmm import (
    PATTERN_CLASSES,
    ModelParams,
    MatrixSampler,
    PatternMoments,
    dense_moments,
    to_pattern_moments,
)

MAX_NODES = 8
MAX_ORDER = 4
BRUTE_MAX_D = 5


def set_partitions(n: int):
    """Restricted growth strings of length n: block label of each element."""
    if n == 0:
        yield ()
        return

    def grow(prefix, top):
        if len(prefix) == n:
            yield tuple(prefix)
            return
        for b in range(top + 2):
            prefix.append(b)
            yield from grow(prefix, max(top, b))
            prefix.pop()

    yield from grow([0], 0)


def falling_factorial(d: int, k: int) -> int:
    out = 1
    for j in range(k):
        out *= d - j
    return out


@lru_cache(maxsize=None)
def _pairings(k: int):
    """Partial pairings of range(k) as (pairs, singletons)."""
    out = []

    def go(rest, pairs, singles):
        if not rest:
            out.append((tuple(pairs), tuple(singles)))
            return
        first, tail = rest[0], rest[1:]
        go(tail, pairs, singles + [first])
        for m, other in enumerate(tail):
            go(tail[:m] + tail[m + 1:], pairs + [(first, other)], singles)

    go(tuple(range(k)), [], [])
    return tuple(out)


def isserlis(means, cov) -> float | np.ndarray:
    """E[X_1 ... X_k] for jointly Gaussian X with the given means and covariance.

    Broadcasts over trailing axes: ``means`` may be ``(k, ...)`` and ``cov``
    ``(k, k, ...)``.
    """
    means = np.asarray(means, dtype=float)
    cov = np.asarray(cov, dtype=float)
    k = means.shape[0]
    if k > MAX_ORDER:
        raise ValueError(f"Isserlis moments are supported up to order {MAX_ORDER}, got {k}")
    total = 0.0
    for pairs, singles in _pairings(k):
        term = 1.0
        for a, b in pairs:
            term = term * cov[a, b]
        for a in singles:
            term = term * means[a]
        total = total + term
    return total


def entry_class(first: tuple, second: tuple) -> str:
    """Coincidence class of two entries given their index labels."""

    def spell(x, y):
        names = {}
        letters = []
        for v in (*x, *y):
            letters.append(names.setdefault(v, "ijkl"[len(names)]))
        return "".join(letters[:2]) + "," + "".join(letters[2:])

    return min(spell(first, second), spell(second, first))


@lru_cache(maxsize=None)
def _partition_terms(index: int):
    """Distinct (block count, mean kinds, pair classes) signatures with multiplicity."""
    inv = invariant(index)
    if inv.node_count > MAX_NODES:
        raise ValueError(f"invariants with more than {MAX_NODES} nodes are unsupported")
    edges = inv.edges
    k = len(edges)
    terms = Counter()
    for labels in set_partitions(inv.node_count):
        entries = [(labels[a], labels[b]) for a, b in edges]
        kinds = tuple(e[0] == e[1] for e in entries)
        classes = tuple(entry_class(entries[p], entries[q]) for p in range(k) for q in range(p, k))
        terms[(max(labels) + 1, kinds, classes)] += 1
    return tuple(terms.items())


def _class_table(pm: PatternMoments) -> dict:
    table = dict(zip(PATTERN_CLASSES, pm.second))
    missing = [c for c in _all_classes() if c not in table]
    if missing:
        raise RuntimeError(f"class table is incomplete: {missing}")
    return table


@lru_cache(maxsize=1)
def _all_classes():
    seen = set()
    for a, b, c, e in product(range(4), repeat=4):
        seen.add(entry_class((a, b), (c, e)))
    return tuple(sorted(seen))


def _as_moments(model, d=None) -> tuple[PatternMoments, int]:
    if isinstance(model, ModelParams):
        return to_pattern_moments(model), model.d
    if d is None:
        raise ValueError("dimension is required with pattern moments")
    return model, int(d)


def expected_invariant(model, index: int, d: int | None = None) -> float:
    """Model expectation of invariant ``index``.

    ``model`` is a :class:`ModelParams` or a :class:`PatternMoments` (then pass ``d``).
    """
    pm, d = _as_moments(model, d)
    table = _class_table(pm)
    k = invariant(index).order
    total = 0.0
    for (blocks, kinds, classes), count in _partition_terms(index):
        weight = falling_factorial(d, blocks)
        if weight == 0:
            continue
        mu = np.array([pm.mean_diag if diag else pm.mean_off for diag in kinds])
        cov = np.empty((k, k))
        it = iter(classes)
        for p in range(k):
            for q in range(p, k):
                cov[p, q] = cov[q, p] = table[next(it)] - mu[p] * mu[q]
        total += count * weight * isserlis(mu, cov)
    return float(total)


def expected_all(model, ids, d: int | None = None) -> np.ndarray:
    pm, d = _as_moments(model, d)
    return np.array([expected_invariant(pm, i, d) for i in ids])


def brute_expected_invariant(params: ModelParams, index: int, d: int | None = None) -> float:
    """Literal sum over all index tuples using the dense entry mean and covariance."""
    d = params.d if d is None else int(d)
    if d != params.d:
        raise ValueError("dimension does not match the model")
    if d > BRUTE_MAX_D:
        raise ValueError(f"brute-force expectation is limited to d <= {BRUTE_MAX_D}")
    inv = invariant(index)
    mean, cov = dense_moments(params)
    n = inv.node_count
    idx = np.indices((d,) * n).reshape(n, -1)
    flat = np.array([idx[a] * d + idx[b] for a, b in inv.edges])
    means = mean[flat]
    covs = cov[flat[:, None, :], flat[None, :, :]]
    return float(np.sum(isserlis(means, covs)))


def mc_expected_invariant(params: ModelParams, index: int, n_samples: int, seed: int,
                          batch: int = 20000) -> tuple[float, float]:
    """Monte Carlo mean and its standard error from ``n_samples`` model draws."""
    sampler = MatrixSampler(params)
    rng = np.random.default_rng(seed)
    values = []
    left = n_samples
    while left > 0:
        m = min(batch, left)
        values.append(eval_all(sampler.draw(rng, m))[:, index - 1])
        left -= m
    v = np.concatenate(values)
    return float(v.mean()), float(v.std(ddof=1) / np.sqrt(len(v)))
