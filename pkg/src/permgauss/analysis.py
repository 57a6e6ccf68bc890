"""Per-ensemble analysis: invariant statistics, fitted models, deviations and distances."""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from itertools import combinations
from pathlib import Path

import numpy as np

from . import baselines
from .dataio import SnapshotStore, export_table
from .invariants import CQ_IDS, LQ_IDS, N_INVARIANTS, eval_all
from .metrics import deviation_cq, deviation_lq, normalized_change, pmcc, wasserstein
from .pigmm import PARAM_NAMES, DomainError, ModelParams, fit_params, psd_check, reference_params
from .wick import expected_invariant

ALL_IDS = tuple(range(1, N_INVARIANTS + 1))


class AnalysisError(ValueError):
    pass


@dataclass
class CellAnalysis:
    """Lazily computed tables for one snapshot store."""

    store: SnapshotStore
    predict_ids: tuple = CQ_IDS
    clip: bool = False  # project non-PSD fits onto the PSD cone before distances

    def __post_init__(self):
        if self.store.runs < 2:
            raise AnalysisError(f"analysis needs at least 2 runs, store has {self.store.runs}")
        if self.store.d < 4:
            raise AnalysisError("analysis needs square layers with d >= 4")

    @property
    def d(self) -> int:
        return self.store.d

    @property
    def fan_in(self) -> int:
        return int(self.store.meta.get("fan_in", self.store.d))

    @property
    def layers(self) -> range:
        return range(self.store.layer_count)

    @property
    def epochs(self) -> range:
        return range(self.store.epochs + 1)

    @cached_property
    def values(self) -> np.ndarray:
        """All 52 invariants, shape (runs, layers, epochs + 1, 52)."""
        return eval_all(self.store.matrices)

    @cached_property
    def means(self) -> np.ndarray:
        return self.values.mean(axis=0)

    @cached_property
    def stds(self) -> np.ndarray:
        return self.values.std(axis=0, ddof=1)

    @cached_property
    def params(self) -> dict:
        return {
            (l, e): fit_params(self.means[l, e, :13], self.d)
            for l in self.layers
            for e in self.epochs
        }

    @cached_property
    def reference(self) -> ModelParams:
        return reference_params(self.store.scheme, self.d, self.fan_in)

    @cached_property
    def invariant_baseline(self) -> baselines.Baseline:
        return baselines.init_invariant_baseline(self.store.scheme, self.fan_in, self.store.runs)

    @cached_property
    def param_baseline(self) -> baselines.Baseline:
        if self.fan_in != self.d:
            raise AnalysisError("parameter baselines assume fan-in equal to the layer dimension")
        return baselines.init_param_baseline(self.store.scheme, self.d, self.store.runs)

    @cached_property
    def predictions(self) -> dict:
        return {
            key: np.array([expected_invariant(p, i) for i in self.predict_ids])
            for key, p in self.params.items()
        }

    def invariant_rows(self):
        n = self.store.runs
        for l in self.layers:
            for e in self.epochs:
                for i in ALL_IDS:
                    m, s = self.means[l, e, i - 1], self.stds[l, e, i - 1]
                    yield {"layer": l + 1, "epoch": e, "id": i, "mean": m, "std": s,
                           "se": s / np.sqrt(n), "n": n}

    def param_rows(self):
        for (l, e), p in self.params.items():
            rep = psd_check(p)
            row = {"layer": l + 1, "epoch": e}
            row.update(zip(PARAM_NAMES, p.f.tolist()))
            row["psd_valid"] = rep.is_valid
            row["min_eigenvalue"] = rep.min_eigenvalue
            yield row

    @cached_property
    def lq_invariant_deviation(self) -> np.ndarray:
        """Shape (layers, epochs + 1, 13)."""
        b = self.invariant_baseline
        return deviation_lq(self.means[..., :13], b.mean, b.spread)

    @cached_property
    def lq_param_deviation(self) -> np.ndarray:
        b = self.param_baseline
        f = np.array([[self.params[l, e].f for e in self.epochs] for l in self.layers])
        return deviation_lq(f, b.mean, b.spread)

    def lq_rows(self):
        ib, pb = self.invariant_baseline, self.param_baseline
        for l in self.layers:
            for e in self.epochs:
                for k, i in enumerate(LQ_IDS):
                    yield {"layer": l + 1, "epoch": e, "kind": "invariant", "id": i,
                           "observed": self.means[l, e, k], "expected": ib.mean[k],
                           "spread": ib.spread[k], "deviation": self.lq_invariant_deviation[l, e, k]}
                for k in range(13):
                    yield {"layer": l + 1, "epoch": e, "kind": "param", "id": k + 1,
                           "observed": self.params[l, e].f[k], "expected": pb.mean[k],
                           "spread": pb.spread[k], "deviation": self.lq_param_deviation[l, e, k]}

    @cached_property
    def cq_deviation(self) -> np.ndarray:
        """Shape (layers, epochs + 1, len(predict_ids))."""
        cols = [i - 1 for i in self.predict_ids]
        out = np.empty((len(self.layers), len(self.epochs), len(cols)))
        for l in self.layers:
            for e in self.epochs:
                out[l, e] = deviation_cq(self.predictions[l, e], self.means[l, e, cols], self.stds[l, e, cols])
        return out

    def prediction_rows(self):
        for l in self.layers:
            for e in self.epochs:
                for k, i in enumerate(self.predict_ids):
                    yield {"layer": l + 1, "epoch": e, "id": i, "theory": self.predictions[l, e][k],
                           "exp_mean": self.means[l, e, i - 1], "exp_std": self.stds[l, e, i - 1],
                           "deviation": self.cq_deviation[l, e, k]}

    def normalized_change_rows(self):
        last = self.store.epochs
        for l in self.layers:
            for k, i in enumerate(self.predict_ids):
                start, final = self.cq_deviation[l, 0, k], self.cq_deviation[l, last, k]
                change, undefined = normalized_change(start, final)
                yield {"layer": l + 1, "id": i, "d_start": start, "d_final": final,
                       "change": change, "undefined": undefined}

    def pmcc_rows(self):
        last = self.store.epochs
        for measure, dev in (("invariant", self.lq_invariant_deviation), ("param", self.lq_param_deviation)):
            for stage, e in (("start", 0), ("final", last)):
                for a, b in combinations(self.layers, 2):
                    try:
                        value = pmcc(dev[a, e], dev[b, e])
                    except ValueError:
                        value = float("nan")
                    yield {"measure": measure, "stage": stage, "layer_a": a + 1, "layer_b": b + 1, "pmcc": value}

    def _distance(self, params: ModelParams) -> float:
        try:
            return wasserstein(params, self.reference, clip=self.clip)
        except DomainError:
            return float("nan")  # fitted model is not a valid Gaussian and clipping is off

    @cached_property
    def distances(self) -> np.ndarray:
        """Shape (layers, epochs + 1); NaN where the fit is not PSD and ``clip`` is off."""
        return np.array([[self._distance(self.params[l, e]) for e in self.epochs] for l in self.layers])

    def wasserstein_rows(self):
        for l in self.layers:
            for e in self.epochs:
                yield {"layer": l + 1, "epoch": e, "distance": self.distances[l, e],
                       "psd_valid": psd_check(self.params[l, e]).is_valid}

    def accuracy_rows(self):
        acc = self.store.accuracies
        n = self.store.runs
        for e in self.epochs:
            col = acc[:, e]
            yield {"epoch": e, "mean": col.mean(), "se": col.std(ddof=1) / np.sqrt(n), "n": n}


TABLE_GROUPS = {
    "invariants": ("accuracy", "invariant_stats"),
    "fit": ("params",),
    "predict": ("cq_predictions", "normalized_change"),
    "deviations": ("lq_deviations", "pmcc"),
    "wasserstein": ("wasserstein",),
}

_ROW_SOURCES = {
    "accuracy": "accuracy_rows",
    "invariant_stats": "invariant_rows",
    "params": "param_rows",
    "cq_predictions": "prediction_rows",
    "normalized_change": "normalized_change_rows",
    "lq_deviations": "lq_rows",
    "pmcc": "pmcc_rows",
    "wasserstein": "wasserstein_rows",
}


def cell_meta(analysis: CellAnalysis) -> dict:
    s = analysis.store
    return {"scheme": s.scheme, "regularized": bool(s.regularized), "d": int(s.d),
            "fan_in": analysis.fan_in, "runs": int(s.runs), "epochs": int(s.epochs),
            "layer_count": int(s.layer_count), "master_seed": int(s.master_seed)}


def write_tables(analysis: CellAnalysis, directory, groups=tuple(TABLE_GROUPS)) -> list:
    """Write the CSVs of the requested table groups plus ``meta.json``; returns written paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meta = directory / "meta.json"
    meta.write_text(json.dumps(cell_meta(analysis), indent=1, sort_keys=True) + "\n")
    written = [meta]
    for group in groups:
        for name in TABLE_GROUPS[group]:
            path = directory / f"{name}.csv"
            export_table(getattr(analysis, _ROW_SOURCES[name])(), path)
            written.append(path)
    return written
