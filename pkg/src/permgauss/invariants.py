"""Permutation invariants of square matrices.

Each invariant is a sum over free indices of a product of matrix entries,
encoded as a directed multigraph: nodes are summed indices, an edge ``(a, b)``
is a factor ``W[a, b]``.  Sums are unrestricted, so coincident index values
are included.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

# Index patterns of the 52 invariants, one comma-separated factor per edge.
_PATTERNS = (
    # linear
    "ii", "ij",
    # quadratic
    "ij,ij", "ij,ji", "ii,ij", "ii,ji", "ij,ik", "ij,kj", "ij,jk", "ij,kl",
    "ii,ii", "ii,jj", "ii,jk",
    # cubic
    "ii,ii,ii",
    "ii,ii,jj", "ii,ij,jj", "ii,ii,ij", "ji,ii,ii", "ii,ij,ij",
    "ji,ii,ij", "ji,ji,ii", "ij,ij,ij", "ij,ij,ji",
    "ii,jk,lm", "ij,jk,lm", "ij,kj,lm", "ji,jk,lm",
    "ij,kl,mn",
    # quartic
    "ii,ii,ii,ii",
    "ii,ii,ii,jj", "ii,ii,jj,jj", "ii,ii,ii,ij", "ji,ii,ii,ii",
    "ii,ii,ij,jj", "jj,ji,ii,ii", "ii,ii,ij,ij", "ji,ii,ii,ij",
    "ji,ji,ii,ii", "ii,ij,ij,jj", "ji,ii,ij,jj", "ii,ij,ij,ij",
    "ji,ii,ij,ij", "ji,ji,ii,ij", "ji,ji,ji,ii", "ij,ij,ij,ij",
    "ji,ij,ij,ij", "ji,ji,ij,ij",
    "ii,jk,lm,no", "ij,jk,lm,no", "ij,kj,lm,no", "ji,jk,lm,no",
    "ij,kl,mn,op",
)

N_INVARIANTS = len(_PATTERNS)
LINEAR_IDS = (1, 2)
QUADRATIC_IDS = tuple(range(3, 14))
LQ_IDS = tuple(range(1, 14))
CUBIC_IDS = tuple(range(14, 29))
QUARTIC_IDS = tuple(range(29, 53))
CQ_IDS = tuple(range(14, 53))


@dataclass(frozen=True)
class InvariantId:
    index: int
    pattern: str

    @property
    def edges(self) -> tuple[tuple[int, int], ...]:
        letters = sorted(set(self.pattern.replace(",", "")))
        label = {ch: n for n, ch in enumerate(letters)}
        return tuple((label[f[0]], label[f[1]]) for f in self.pattern.split(","))

    @property
    def order(self) -> int:
        return self.pattern.count(",") + 1

    @property
    def node_count(self) -> int:
        return len(set(self.pattern.replace(",", "")))

    @property
    def formula(self) -> str:
        return " ".join(f"W_{f}" for f in self.pattern.split(","))


CATALOGUE = {k + 1: InvariantId(k + 1, p) for k, p in enumerate(_PATTERNS)}


def invariant(index: int) -> InvariantId:
    try:
        return CATALOGUE[int(index)]
    except KeyError:
        raise ValueError(f"unknown invariant id {index}; valid ids are 1..{N_INVARIANTS}") from None


def _as_square(W) -> np.ndarray:
    W = np.asarray(W, dtype=float)
    if W.ndim < 2 or W.shape[-1] != W.shape[-2]:
        raise ValueError(f"expected square matrices, got shape {W.shape}")
    return W


def eval_all(W) -> np.ndarray:
    """All 52 invariants of ``W``.

    ``W`` may be a single ``(d, d)`` matrix or a stack ``(..., d, d)``; the
    result has shape ``(..., 52)`` with column ``k`` holding invariant ``k + 1``.
    """
    W = _as_square(W)
    A = W
    B = np.swapaxes(W, -1, -2)
    D = np.diagonal(W, axis1=-2, axis2=-1)
    T = D.sum(-1)
    S = W.sum((-2, -1))
    r = W.sum(-1)
    c = W.sum(-2)

    def tot(X):
        return X.sum((-2, -1))

    def dot(x, y):
        return (x * y).sum(-1)

    def quad(x, M, y):
        # sum_ij x_i M_ij y_j
        return np.einsum("...i,...ij,...j->...", x, M, y)

    A2, A3 = A * A, A * A * A
    AB = A * B
    B2 = B * B
    D2, D3 = D * D, D * D * D

    I7, I8, I9 = dot(r, r), dot(c, c), dot(r, c)
    out = [
        T, S,
        tot(A2), tot(AB), dot(D, r), dot(D, c), I7, I8, I9, S * S,
        dot(D, D), T * T, T * S,
        D3.sum(-1),
        D2.sum(-1) * T, quad(D, A, D), dot(D2, r), dot(D2, c), dot(D, A2.sum(-1)),
        dot(D, AB.sum(-1)), dot(D, B2.sum(-1)), tot(A3), tot(A2 * B),
        T * S * S, I9 * S, I8 * S, I7 * S,
        S ** 3,
        (D2 * D2).sum(-1),
        D3.sum(-1) * T, D2.sum(-1) ** 2, dot(D3, r), dot(D3, c),
        quad(D2, A, D), quad(D2, B, D), dot(D2, A2.sum(-1)), dot(D2, AB.sum(-1)),
        dot(D2, B2.sum(-1)), quad(D, A2, D), quad(D, AB, D), dot(D, A3.sum(-1)),
        dot(D, (B * A2).sum(-1)), dot(D, (B2 * A).sum(-1)), dot(D, (B2 * B).sum(-1)), tot(A2 * A2),
        tot(B * A3), tot(B2 * A2),
        T * S ** 3, I9 * S * S, I8 * S * S, I7 * S * S,
        S ** 4,
    ]
    return np.stack(out, axis=-1)


def eval_invariant(W, index: int) -> float:
    """Single invariant via the factorized evaluator."""
    inv = invariant(index)
    W = _as_square(W)
    if W.ndim != 2:
        raise ValueError("eval_invariant takes one matrix; use eval_all for stacks")
    return float(eval_all(W)[inv.index - 1])


def naive_eval(W, index: int) -> float:
    """Literal nested index sum of the defining product (cost d**node_count)."""
    inv = invariant(index)
    W = _as_square(W)
    if W.ndim != 2:
        raise ValueError("naive_eval takes one matrix")
    subscripts = inv.pattern + "->"
    return float(np.einsum(subscripts, *([W] * inv.order), optimize=False))


@dataclass(frozen=True)
class InvariantStats:
    ids: tuple[int, ...]
    mean: np.ndarray
    std: np.ndarray
    se: np.ndarray
    n: int

    def row(self, index: int) -> dict:
        k = self.ids.index(index)
        return {"id": index, "mean": self.mean[k], "std": self.std[k], "se": self.se[k], "n": self.n}


def invariant_stats(matrices, ids: Iterable[int] | None = None) -> InvariantStats:
    """Mean, sample standard deviation (ddof=1) and standard error over an ensemble."""
    mats = _as_square(matrices)
    if mats.ndim != 3:
        raise ValueError("expected a stack of matrices with shape (runs, d, d)")
    n = mats.shape[0]
    if n < 2:
        raise ValueError(f"ensemble statistics need at least 2 matrices, got {n}")
    ids = tuple(LQ_IDS + CQ_IDS if ids is None else (invariant(i).index for i in ids))
    values = eval_all(mats)[:, [i - 1 for i in ids]]
    mean = values.mean(axis=0)
    std = values.std(axis=0, ddof=1)
    return InvariantStats(ids=ids, mean=mean, std=std, se=std / np.sqrt(n), n=n)


def ensemble_stats(store, layer: int, epoch: int, ids: Sequence[int] | None = None) -> InvariantStats:
    """Invariant statistics across runs for one (layer, epoch) cell of a snapshot store."""
    if store.runs == 0:
        raise ValueError("empty ensemble")
    return invariant_stats(store.matrices[:, layer, epoch], ids)
