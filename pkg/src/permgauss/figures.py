"""Render the report's series CSVs to PNG files (requires matplotlib)."""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path

from .dataio import read_table


def _plt():
    try:
        import matplotlib
    except ImportError as exc:
        raise RuntimeError("figure rendering needs matplotlib; install the 'figures' extra") from exc
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _epoch_axis(ax):
    from matplotlib.ticker import MaxNLocator

    ax.set_xlabel("epoch")
    ax.xaxis.set_major_locator(MaxNLocator(integer=True))


def _group(rows, *keys):
    out = defaultdict(list)
    for r in rows:
        out[tuple(r[k] for k in keys)].append(r)
    return out


def _trajectories(plt, rows, value, title, ylabel, path, log=False):
    """One panel per (cell, layer); one line per invariant id."""
    panels = _group(rows, "cell", "layer")
    fig, axes = plt.subplots(1, len(panels), figsize=(4 * len(panels), 3.2), squeeze=False)
    for ax, ((cell, layer), sub) in zip(axes[0], sorted(panels.items())):
        for (ident,), series in sorted(_group(sub, "id").items()):
            series.sort(key=lambda r: r["epoch"])
            ax.plot([r["epoch"] for r in series], [r[value] for r in series], lw=0.8, label=f"{int(ident)}")
        ax.set_title(f"{cell} layer {int(layer)}", fontsize=9)
        _epoch_axis(ax)
        if log:
            ax.set_yscale("log")
    axes[0][0].set_ylabel(ylabel)
    fig.suptitle(title, fontsize=10)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def render_all(report_dir) -> list[Path]:
    plt = _plt()
    report_dir = Path(report_dir)
    written = []

    lq = read_table(report_dir / "series_lq_deviation.csv")
    path = report_dir / "lq_deviation.png"
    _trajectories(plt, lq, "deviation", "LQ invariant deviation from initialization", "deviation", path, log=True)
    written.append(path)

    cq = read_table(report_dir / "series_cq_deviation.csv")
    path = report_dir / "cq_deviation.png"
    _trajectories(plt, cq, "deviation", "CQ deviation from fitted-model prediction", "deviation", path)
    written.append(path)

    change = read_table(report_dir / "series_normalized_change.csv")
    panels = _group(change, "cell", "layer")
    fig, axes = plt.subplots(1, len(panels), figsize=(4 * len(panels), 3.2), squeeze=False)
    for ax, ((cell, layer), sub) in zip(axes[0], sorted(panels.items())):
        sub.sort(key=lambda r: r["id"])
        ax.bar([int(r["id"]) for r in sub], [r["change"] for r in sub], width=0.8)
        ax.set_ylim(-1, 1)
        ax.set_title(f"{cell} layer {int(layer)}", fontsize=9)
        ax.set_xlabel("invariant")
    axes[0][0].set_ylabel("normalized change")
    fig.tight_layout()
    path = report_dir / "normalized_change.png"
    fig.savefig(path, dpi=110)
    plt.close(fig)
    written.append(path)

    dist = read_table(report_dir / "series_wasserstein.csv")
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for (cell, layer), series in sorted(_group(dist, "cell", "layer").items()):
        series.sort(key=lambda r: r["epoch"])
        ax.plot([r["epoch"] for r in series], [r["distance"] for r in series], marker=".", label=f"{cell} L{int(layer)}")
    _epoch_axis(ax)
    ax.set_ylabel("Wasserstein distance")
    ax.legend(fontsize=7)
    fig.tight_layout()
    path = report_dir / "wasserstein.png"
    fig.savefig(path, dpi=110)
    plt.close(fig)
    written.append(path)
    return written
