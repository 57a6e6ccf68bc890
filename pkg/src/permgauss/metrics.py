"""Deviation measures, normalized change, correlation and the model Wasserstein distance."""

from __future__ import annotations

import warnings

import numpy as np

from .pigmm import DomainError, ModelParams, clip_to_psd, require_psd, to_blocks

CLAMP_TOL = 1e-12


def deviation_lq(observed, expectation, se):
    """Distance of an ensemble mean from its baseline in units of the baseline standard error."""
    se = np.asarray(se, dtype=float)
    if np.any(se <= 0):
        raise DomainError("standard error must be positive")
    return np.abs(np.asarray(observed, dtype=float) - expectation) / se


def deviation_cq(theory, exp_mean, exp_std):
    """Distance of a model prediction from the ensemble mean in units of the ensemble spread."""
    exp_std = np.asarray(exp_std, dtype=float)
    if np.any(exp_std <= 0):
        raise DomainError("ensemble standard deviation must be positive")
    return np.abs(np.asarray(theory, dtype=float) - exp_mean) / exp_std


def normalized_change(d_start: float, d_final: float) -> tuple[float, bool]:
    """(final - start) / (final + start), with a flag set when both are zero."""
    if d_start < 0 or d_final < 0:
        raise DomainError("deviations are nonnegative")
    total = d_start + d_final
    if total == 0:
        return 0.0, True
    return (d_final - d_start) / total, False


def pmcc(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or len(x) < 2:
        raise ValueError("pmcc needs two vectors of equal length >= 2")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise DomainError("pmcc is undefined for a constant vector")
    return float(np.corrcoef(x, y)[0, 1])


def _psd_sqrt(S: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh((S + S.T) / 2)
    return (V * np.sqrt(np.clip(w, 0, None))) @ V.T


def _trace_sqrt_product(S: np.ndarray, T: np.ndarray) -> float:
    """tr (S^1/2 T S^1/2)^1/2 for small PSD blocks."""
    R = _psd_sqrt(S)
    w = np.linalg.eigvalsh(R @ T @ R)
    return float(np.sqrt(np.clip(w, 0, None)).sum())


def wasserstein_squared(a: ModelParams, b: ModelParams, clip: bool = False) -> float:
    """Squared 2-Wasserstein distance between two models, evaluated block by block."""
    if a.d != b.d:
        raise ValueError(f"dimension mismatch: {a.d} vs {b.d}")
    if clip:
        for p in (a, b):
            if not _is_psd(p):
                warnings.warn("clipping negative eigenvalues of a non-PSD model", RuntimeWarning)
        a, b = clip_to_psd(a), clip_to_psd(b)
    require_psd(a, "the Wasserstein distance")
    require_psd(b, "the Wasserstein distance")
    A, B = to_blocks(a), to_blocks(b)
    m0, mH, m2, m3 = A.multiplicities
    s2a, s2b = max(A.s_V2, 0.0), max(B.s_V2, 0.0)
    s3a, s3b = max(A.s_V3, 0.0), max(B.s_V3, 0.0)
    means = float(np.sum((A.mu - B.mu) ** 2))
    traces = (np.trace(A.S_V0) + np.trace(B.S_V0)
              + mH * (np.trace(A.S_VH) + np.trace(B.S_VH))
              + m2 * (s2a + s2b) + m3 * (s3a + s3b))
    cross = (m0 * _trace_sqrt_product(A.S_V0, B.S_V0)
             + mH * _trace_sqrt_product(A.S_VH, B.S_VH)
             + m2 * np.sqrt(s2a * s2b) + m3 * np.sqrt(s3a * s3b))
    out = means + traces - 2.0 * cross
    scale = max(abs(traces), 1.0)
    if out < 0:
        if out < -CLAMP_TOL * scale:
            raise ArithmeticError(f"negative squared distance {out:.3e}")
        out = 0.0
    return float(out)


def _is_psd(p: ModelParams) -> bool:
    try:
        require_psd(p)
        return True
    except DomainError:
        return False


def wasserstein(a: ModelParams, b: ModelParams, clip: bool = False) -> float:
    return float(np.sqrt(wasserstein_squared(a, b, clip)))
