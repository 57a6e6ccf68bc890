"""Closed-form initialization baselines for I1..I13 and the 13 fitted parameters.

Entries of a freshly initialized layer are i.i.d. with moments m1..m4.  The
variance formulas treat distinct product terms of an invariant as
uncorrelated, and parameter variances propagate invariant variances linearly
under the same independence assumption.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .invariants import LQ_IDS, eval_all
from .pigmm import DomainError, N_FEATURES, fit_coefficients, lq_features

SCHEMES = ("gaussian", "uniform")


@dataclass(frozen=True)
class WeightMoments:
    m1: float
    m2: float
    m3: float
    m4: float


@dataclass(frozen=True)
class Baseline:
    mean: np.ndarray
    spread: np.ndarray  # standard error for invariants, standard deviation for parameters


def weight_moments(scheme: str, d: int) -> WeightMoments:
    if d < 1:
        raise ValueError("fan-in must be positive")
    if scheme == "gaussian":
        return WeightMoments(0.0, 1.0 / d, 0.0, 3.0 / d ** 2)
    if scheme == "uniform":
        return WeightMoments(0.0, 1.0 / (3 * d), 0.0, 1.0 / (5 * d ** 2))
    raise ValueError(f"unknown scheme {scheme!r}")


def invariant_expectations(wm: WeightMoments, d: int) -> np.ndarray:
    m1, m2 = wm.m1, wm.m2
    a = d * m2 + d * (d - 1) * m1 ** 2
    row = d * d * m2 + d * d * (d - 1) * m1 ** 2
    path = d * m2 + (d ** 3 - d) * m1 ** 2
    return np.array([
        d * m1,
        d * d * m1,
        d * d * m2,
        a, a, a,
        row, row,
        path,
        d * d * m2 + (d ** 4 - d * d) * m1 ** 2,
        d * m2,
        a,
        path,
    ])


def invariant_variances(wm: WeightMoments, d: int) -> np.ndarray:
    """Per-matrix variances of I1..I13 for zero-mean entries."""
    if wm.m1 != 0:
        raise DomainError("variance formulas assume zero-mean weights")
    m2, m4 = wm.m2, wm.m4
    q = m2 * m2
    a = d * m4 + d * (d - 2) * q
    row = d * d * m4 + d * d * (d - 2) * q
    path = d * m4 + d * (d * d - 2) * q
    return np.array([
        d * m2,
        d * d * m2,
        d * d * (m4 - q),
        a, a, a,
        row, row,
        path,
        d * d * m4 + d * d * (d * d - 2) * q,
        d * (m4 - q),
        a,
        path,
    ])


def init_invariant_baseline(scheme: str, d: int, N: int) -> Baseline:
    """Expected ensemble means of I1..I13 and their standard errors over N runs."""
    if N < 1:
        raise ValueError("N must be positive")
    wm = weight_moments(scheme, d)
    return Baseline(invariant_expectations(wm, d), np.sqrt(invariant_variances(wm, d) / N))


def feature_expectations(wm: WeightMoments, d: int, N: int) -> np.ndarray:
    """Expectations of I1..I13 means and of the products I1^2, I1*I2, I2^2 of means."""
    m1, m2 = wm.m1, wm.m2
    out = np.empty(N_FEATURES)
    out[:13] = invariant_expectations(wm, d)
    out[13] = d / N * m2 + d * (d - 1 / N) * m1 ** 2
    out[14] = d / N * m2 + d * (d * d - 1 / N) * m1 ** 2
    out[15] = d * d / N * m2 + d * d * (d * d - 1 / N) * m1 ** 2
    return out


def feature_variances(wm: WeightMoments, d: int, N: int) -> np.ndarray:
    m2, m4 = wm.m2, wm.m4
    q = m2 * m2
    out = np.empty(N_FEATURES)
    out[:13] = invariant_variances(wm, d) / N
    out[13] = d * m4 / N ** 3 + d / N ** 2 * (d - 2 / N) * q
    out[14] = d * m4 / N ** 3 + d / N ** 2 * (d * d - 2 / N) * q
    out[15] = d * d * m4 / N ** 3 + d * d / N ** 2 * (d * d - 2 / N) * q
    return out


def init_param_baseline(scheme: str, d: int, N: int) -> Baseline:
    """Expected fitted parameters over N-run ensembles and their standard deviations."""
    if d < 4:
        raise DomainError("parameter baselines need d >= 4")
    if N < 1:
        raise ValueError("N must be positive")
    wm = weight_moments(scheme, d)
    C = fit_coefficients(d)
    mean = C @ feature_expectations(wm, d, N)
    var = (C * C) @ feature_variances(wm, d, N)
    return Baseline(mean, np.sqrt(var))


def _draw_weights(scheme: str, d: int, shape, rng: np.random.Generator) -> np.ndarray:
    if scheme == "gaussian":
        return rng.normal(0.0, 1.0 / np.sqrt(d), size=shape)
    bound = 1.0 / np.sqrt(d)
    return rng.uniform(-bound, bound, size=shape)


@dataclass(frozen=True)
class ValidationReport:
    invariant_z: np.ndarray
    param_z: np.ndarray
    invariant_spread_ratio: np.ndarray
    param_spread_ratio: np.ndarray

    @property
    def max_invariant_z(self) -> float:
        return float(np.abs(self.invariant_z).max())

    @property
    def max_param_z(self) -> float:
        return float(np.abs(self.param_z).max())


def mc_validate_baseline(scheme: str, d: int, N: int, trials: int, seed: int) -> ValidationReport:
    """Simulate ``trials`` ensembles of N matrices and standardize against the closed forms.

    z-scores compare the mean over trials with the closed-form expectation in
    units of closed-form spread / sqrt(trials).  Spread ratios compare the
    empirical spread across trials with the closed-form spread.
    """
    if trials < 100:
        raise ValueError("use at least 100 trials")
    rng = np.random.default_rng(seed)
    inv_base = init_invariant_baseline(scheme, d, N)
    par_base = init_param_baseline(scheme, d, N)
    C = fit_coefficients(d)
    means = np.empty((trials, 13))
    params = np.empty((trials, 13))
    for t in range(trials):
        W = _draw_weights(scheme, d, (N, d, d), rng)
        means[t] = eval_all(W)[:, : len(LQ_IDS)].mean(axis=0)
        params[t] = C @ lq_features(means[t])
    root = np.sqrt(trials)

    def z(values, base):
        spread = np.where(base.spread > 0, base.spread, np.nan)
        return (values.mean(axis=0) - base.mean) / (spread / root)

    def ratio(values, base):
        return values.std(axis=0, ddof=1) / base.spread

    return ValidationReport(z(means, inv_base), z(params, par_base), ratio(means, inv_base), ratio(params, par_base))
