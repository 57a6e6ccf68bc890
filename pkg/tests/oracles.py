"""Independent reference implementations used only by the tests."""

from __future__ import annotations

from itertools import product

import numpy as np
from scipy.linalg import sqrtm

from permgauss.pigmm import ModelParams


def random_psd_params(rng: np.random.Generator, d: int, scale: float = 1.0, mean_scale: float = 0.3) -> ModelParams:
    A = rng.normal(size=(2, 2)) * scale
    B = rng.normal(size=(3, 3)) * scale
    S0, SH = A @ A.T, B @ B.T
    f = np.empty(13)
    f[:2] = rng.normal(size=2) * mean_scale
    f[2:5] = S0[0, 0], S0[0, 1], S0[1, 1]
    f[5:11] = SH[0, 0], SH[0, 1], SH[0, 2], SH[1, 1], SH[1, 2], SH[2, 2]
    f[11:] = rng.uniform(0.1, 1.0, size=2) * scale**2
    return ModelParams(d, f)


def loop_invariant(W: np.ndarray, pattern: str) -> float:
    """Explicit Python loop over every assignment of index values."""
    factors = pattern.split(",")
    letters = sorted(set(pattern.replace(",", "")))
    d = W.shape[0]
    total = 0.0
    for values in product(range(d), repeat=len(letters)):
        at = dict(zip(letters, values))
        term = 1.0
        for f in factors:
            term *= W[at[f[0]], at[f[1]]]
        total += term
    return total


def representation_basis(d: int, rng: np.random.Generator):
    """Orthonormal matrix basis adapted to simultaneous row/column permutations.

    Returns the two invariant directions, three (d-1)-dim copies of the standard
    representation, and projectors onto the symmetric and antisymmetric remainders.
    """
    e = np.ones(d) / np.sqrt(d)
    Q, _ = np.linalg.qr(np.column_stack([e, rng.normal(size=(d, d - 1))]))
    U = Q[:, 1:]
    inv = [np.outer(e, e).ravel(), ((np.eye(d) - np.outer(e, e)) / np.sqrt(d - 1)).ravel()]
    copies = [[], [], []]
    for k in range(d - 1):
        u = U[:, k]
        copies[0].append(np.outer(e, u).ravel())
        copies[1].append(np.outer(u, e).ravel())
        diag = np.sqrt(d / (d - 2)) * (np.diag(u) - (np.outer(e, u) + np.outer(u, e)) / np.sqrt(d))
        copies[2].append(diag.ravel())
    copies = [np.array(c).T for c in copies]
    A = np.column_stack([np.array(inv).T] + copies)
    rest = np.eye(d * d) - A @ A.T
    T = np.zeros((d * d, d * d))
    for i in range(d):
        for j in range(d):
            T[i * d + j, j * d + i] = 1.0
    sym = rest @ (np.eye(d * d) + T) / 2
    anti = rest @ (np.eye(d * d) - T) / 2
    return np.array(inv).T, copies, sym, anti


def basis_moments(params: ModelParams, rng: np.random.Generator):
    """Entry mean and covariance assembled directly from block covariances in the adapted basis."""
    f, d = params.f, params.d
    V0, H, sym, anti = representation_basis(d, rng)
    S0 = np.array([[f[2], f[3]], [f[3], f[4]]])
    SH = np.array([[f[5], f[6], f[7]], [f[6], f[8], f[9]], [f[7], f[9], f[10]]])
    cov = V0 @ S0 @ V0.T + f[11] * sym + f[12] * anti
    for a in range(3):
        for b in range(3):
            cov += SH[a, b] * H[a] @ H[b].T
    mean = f[0] * V0[:, 0] + f[1] * V0[:, 1]
    return mean, cov


def dense_bures_squared(mean_a, cov_a, mean_b, cov_b) -> float:
    root = sqrtm(cov_a)
    cross = sqrtm(root @ cov_b @ root)
    value = np.sum((mean_a - mean_b) ** 2) + np.trace(cov_a) + np.trace(cov_b) - 2 * np.trace(cross).real
    return float(np.real(value))


def extended_loss(weights, x, labels, l2_lambda=0.0):
    """Mean softmax cross-entropy of a bias-free ReLU net, evaluated in long double."""
    h = np.asarray(x, dtype=np.longdouble)
    Ws = [np.asarray(W, dtype=np.longdouble) for W in weights]
    for W in Ws[:-1]:
        h = np.maximum(h @ W.T, 0)
    z = h @ Ws[-1].T
    z = z - z.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    loss = -logp[np.arange(len(labels)), labels].mean()
    return loss + l2_lambda * sum((W * W).sum() for W in Ws)


def central_difference(weights, x, labels, l2_lambda, k, i, j, h=1e-6):
    plus = [np.asarray(W, dtype=np.longdouble).copy() for W in weights]
    minus = [W.copy() for W in plus]
    plus[k][i, j] += h
    minus[k][i, j] -= h
    diff = extended_loss(plus, x, labels, l2_lambda) - extended_loss(minus, x, labels, l2_lambda)
    return float(diff / (2 * h))


def param_std_oracle(m2, m4, d, N):
    """Closed forms of the parameter standard deviations under the independence approximation."""
    q = m2 * m2
    s = 1 / N + 1 / N**3
    D2, D1, D2m = d * d, (d - 1) ** 2, (d - 2) ** 2
    var = [
        m2 / N,
        (d + 1) * m2 / (N * (d - 1)),
        s * m4 / D2 + (1 / N + 1 / N**2 - 2 / (N * D2) - 2 / (N**3 * D2)) * q,
        (d + 1) / (D2 * (d - 1)) * (s * m4 + ((D2 - 2) / N + D2 / N**2 - 2 / N**3) * q),
        (d**3 + 4 * d + 1) / (D2 * D1) * s * m4
        + ((d**4 + 2 * d**3 + d**2 - 8 * d - 2) / N + (d**4 + 4 * d**3 + d**2) / N**2
           - (2 * d**3 + 8 * d + 2) / N**3) * q / (D2 * D1),
        ((D2 + 1) * m4 + (d**3 - D2 - 2) * q) / (N * D2 * D1),
        ((d + 1) * m4 + (d + 1) * (D2 - 2) * q) / (N * D2 * D1),
        ((d**3 + D2 + 2 * d + 4) * m4 + (d**4 + d**3 + 2 * D2 - 4 * d - 8) * q) / (N * D2 * D1 * (d - 2)),
        ((D2 + 1) * m4 + (d**3 - D2 - 2) * q) / (N * D2 * D1),
        ((d**3 + D2 + 2 * d + 4) * m4 + (d**4 + d**3 + 2 * D2 - 4 * d - 8) * q) / (N * D2 * D1 * (d - 2)),
        ((D2 - d + 4) * (d**3 + D2 + 6 * d + 4) * m4
         - (d**5 - 9 * d**4 - 4 * d**3 - 12 * D2 + 40 * d + 32) * q) / (N * D2 * D1 * D2m),
        ((d**5 - d**4 + d**3 + 37 * D2 - 74 * d + 60) * m4 + 8 * (5 * d**3 - 17 * D2 + 24 * d - 15) * q)
        / (N * d * D1 * D2m * (d - 3) ** 2),
        (d**3 + D2 + 2 * d + 4) * m4 / (N * d * D1 * D2m) + 4 * (d + 1) * q / (N * d * D1 * (d - 2)),
    ]
    return np.sqrt(np.array(var))
