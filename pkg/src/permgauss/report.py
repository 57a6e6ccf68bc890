"""Assemble analysis tables into a report bundle, optionally with rendered figures."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import baselines
from .dataio import export_table, read_table
from .pigmm import PARAM_NAMES

ANALYSIS_TABLES = (
    "accuracy",
    "invariant_stats",
    "params",
    "lq_deviations",
    "cq_predictions",
    "normalized_change",
    "pmcc",
    "wasserstein",
)


class MissingInputs(FileNotFoundError):
    def __init__(self, missing):
        super().__init__("missing analysis tables: " + ", ".join(missing))
        self.missing = list(missing)


def load_cell_tables(cell_dir: Path) -> dict:
    missing = [f"{cell_dir.name}/{t}.csv" for t in ANALYSIS_TABLES if not (cell_dir / f"{t}.csv").exists()]
    if not (cell_dir / "meta.json").exists():
        missing.append(f"{cell_dir.name}/meta.json")
    if missing:
        raise MissingInputs(missing)
    tables = {t: read_table(cell_dir / f"{t}.csv") for t in ANALYSIS_TABLES}
    tables["meta"] = json.loads((cell_dir / "meta.json").read_text())
    return tables


def _cells(analysis_dir: Path) -> list[Path]:
    cells = sorted(p for p in analysis_dir.iterdir() if p.is_dir()) if analysis_dir.exists() else []
    if not cells:
        raise MissingInputs([f"{analysis_dir}/<cell>/"])
    return cells


def _tag(cell, rows):
    return [{"cell": cell, **r} for r in rows]


def _wide(rows, key_cols, id_col, value_col, prefix):
    """Pivot long rows to one row per key with one column per id."""
    out = {}
    for r in rows:
        key = tuple(r[k] for k in key_cols)
        out.setdefault(key, dict(zip(key_cols, key)))[f"{prefix}{int(r[id_col])}"] = r[value_col]
    return list(out.values())


def _int(x):
    return int(round(float(x)))


def build_report(analysis_dir, report_dir, figures: bool = False) -> list[Path]:
    """Write table and figure-data CSVs plus a text summary; returns the written paths."""
    analysis_dir, report_dir = Path(analysis_dir), Path(report_dir)
    cells = _cells(analysis_dir)
    tables = {c.name: load_cell_tables(c) for c in cells}
    report_dir.mkdir(parents=True, exist_ok=True)
    written = []

    def emit(name, rows, columns=None):
        path = report_dir / f"{name}.csv"
        export_table(rows, path, columns)
        written.append(path)

    # accuracy summary at the final epoch
    acc_rows = []
    for cell, t in tables.items():
        last = max(t["accuracy"], key=lambda r: r["epoch"])
        acc_rows.append({"cell": cell, "epochs": _int(last["epoch"]), "runs": _int(last["n"]),
                         "final_accuracy": last["mean"], "se": last["se"]})
    emit("accuracy_summary", acc_rows)

    # closed-form baselines at each cell's (scheme, d, N)
    inv_rows, par_rows = [], []
    for cell, t in tables.items():
        scheme, d, n = t["meta"]["scheme"], t["meta"]["fan_in"], t["meta"]["runs"]
        ib = baselines.init_invariant_baseline(scheme, d, n)
        pb = baselines.init_param_baseline(scheme, d, n)
        for stat, vec in (("mean", ib.mean), ("se", ib.spread)):
            inv_rows.append({"cell": cell, "d": d, "N": n, "stat": stat,
                             **{f"I{k + 1}": v for k, v in enumerate(vec)}})
        for stat, vec in (("mean", pb.mean), ("std", pb.spread)):
            par_rows.append({"cell": cell, "d": d, "N": n, "stat": stat,
                             **{f"f{k + 1}": v for k, v in enumerate(vec)}})
    emit("init_invariant_baseline", inv_rows)
    emit("init_param_baseline", par_rows)

    # observed invariant means and fitted parameters before and after training
    for stage in ("start", "final"):
        irows, prows = [], []
        for cell, t in tables.items():
            e = 0 if stage == "start" else max(_int(r["epoch"]) for r in t["params"])
            sel = [r for r in t["invariant_stats"] if _int(r["epoch"]) == e and _int(r["id"]) <= 13]
            irows += _tag(cell, _wide(sel, ("layer", "epoch"), "id", "mean", "I"))
            for r in t["params"]:
                if _int(r["epoch"]) == e:
                    prows.append({"cell": cell, "layer": r["layer"], "epoch": r["epoch"],
                                  **{f"f{k + 1}": r[name] for k, name in enumerate(PARAM_NAMES)}})
        emit(f"lq_invariant_means_{stage}", irows)
        emit(f"fitted_params_{stage}", prows)

    emit("layer_pmcc", [r for cell, t in tables.items() for r in _tag(cell, t["pmcc"])])

    # figure data series
    lq = [r for cell, t in tables.items() for r in _tag(cell, t["lq_deviations"]) if r["kind"] == "invariant"]
    emit("series_lq_deviation", [{k: r[k] for k in ("cell", "layer", "epoch", "id", "deviation")} for r in lq])
    emit("series_normalized_change", [r for cell, t in tables.items() for r in _tag(cell, t["normalized_change"])])
    emit("series_cq_deviation", [{k: r[k] for k in ("cell", "layer", "epoch", "id", "deviation")}
                              for cell, t in tables.items() for r in _tag(cell, t["cq_predictions"])])
    emit("series_wasserstein", [r for cell, t in tables.items() for r in _tag(cell, t["wasserstein"])])

    summary = report_dir / "summary.md"
    summary.write_text(_summary(tables, acc_rows))
    written.append(summary)

    if figures:
        from .figures import render_all

        written += render_all(report_dir)
    return written


def _summary(tables, acc_rows) -> str:
    lines = ["# Weight-ensemble analysis", ""]
    lines.append("| cell | epochs | runs | final accuracy | se |")
    lines.append("|---|---|---|---|---|")
    for r in acc_rows:
        lines.append(f"| {r['cell']} | {r['epochs']} | {r['runs']} | {r['final_accuracy']:.4f} | {r['se']:.4f} |")
    lines.append("")
    for cell, t in tables.items():
        lines.append(f"## {cell}")
        last = max(_int(r["epoch"]) for r in t["wasserstein"])
        for layer in sorted({_int(r["layer"]) for r in t["wasserstein"]}):
            lq0 = [r["deviation"] for r in t["lq_deviations"]
                   if r["kind"] == "invariant" and _int(r["layer"]) == layer and _int(r["epoch"]) == 0]
            lqf = [r["deviation"] for r in t["lq_deviations"]
                   if r["kind"] == "invariant" and _int(r["layer"]) == layer and _int(r["epoch"]) == last]
            cqf = [r["deviation"] for r in t["cq_predictions"]
                   if _int(r["layer"]) == layer and _int(r["epoch"]) == last]
            w = {(_int(r["epoch"])): r["distance"] for r in t["wasserstein"] if _int(r["layer"]) == layer}
            lines.append(
                f"- layer {layer}: mean LQ deviation {np.mean(lq0):.3g} -> {np.mean(lqf):.3g}; "
                f"max CQ deviation at epoch {last} {max(cqf):.3g}; "
                f"distance to initialization model {w[0]:.3g} -> {w[last]:.3g}"
            )
        lines.append("")
    return "\n".join(lines)
