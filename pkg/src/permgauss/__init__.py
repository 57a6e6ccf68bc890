"""Permutation-invariant Gaussian matrix models for ensembles of trained weight matrices."""

from .baselines import init_invariant_baseline, init_param_baseline
from .invariants import CATALOGUE, eval_all, eval_invariant, invariant_stats, naive_eval
from .metrics import deviation_cq, deviation_lq, normalized_change, pmcc, wasserstein
from .pigmm import (
    DomainError,
    ModelParams,
    expected_lq_invariants,
    fit_params,
    psd_check,
    sample_matrix,
    simple_gaussian_params,
    uniform_equivalent_params,
)
from .wick import brute_expected_invariant, expected_invariant

__all__ = [
    "CATALOGUE",
    "DomainError",
    "ModelParams",
    "brute_expected_invariant",
    "deviation_cq",
    "deviation_lq",
    "eval_all",
    "eval_invariant",
    "expected_invariant",
    "expected_lq_invariants",
    "fit_params",
    "init_invariant_baseline",
    "init_param_baseline",
    "invariant_stats",
    "naive_eval",
    "normalized_change",
    "pmcc",
    "psd_check",
    "sample_matrix",
    "simple_gaussian_params",
    "uniform_equivalent_params",
    "wasserstein",
]
