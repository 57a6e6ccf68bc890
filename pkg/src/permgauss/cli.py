"""Command-line driver: train ensembles, analyze snapshot stores, assemble the report.

Layout under ``--out``::

    stores/<cell>.pigw        one snapshot store per (scheme, regularization, width) cell
    analysis/<cell>/*.csv     per-cell tables and meta.json
    report/                   cross-cell tables, series data, summary.md, optional PNGs
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .analysis import TABLE_GROUPS, AnalysisError, CellAnalysis, write_tables
from .dataio import DataError, FormatError, load_mnist, read_store, write_store
from .ensembles import DEFAULT_LAYERS, NetConfig, generate_ensemble, width_layers
from .invariants import CQ_IDS
from .report import MissingInputs, build_report

EXIT_OK = 0
EXIT_MISSING = 2
EXIT_DIVERGED = 3

log = logging.getLogger("permgauss")


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_MISSING):
        super().__init__(message)
        self.code = code


def cell_name(scheme: str, l2_lambda: float, width: int | None) -> str:
    name = scheme
    if l2_lambda > 0:
        name += "-l2"
    if width is not None:
        name += f"-w{width}"
    return name


def parse_ids(text: str) -> tuple[int, ...]:
    """Parse ``"14-52"`` or ``"14,20,30-33"`` into a sorted id tuple."""
    ids = set()
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        lo, _, hi = part.partition("-")
        ids.update(range(int(lo), int(hi or lo) + 1))
    if not ids or min(ids) < 1 or max(ids) > 52:
        raise argparse.ArgumentTypeError(f"invariant ids must lie in 1..52, got {text!r}")
    return tuple(sorted(ids))


def _positive_runs(text: str) -> int:
    value = int(text)
    if value < 2:
        raise argparse.ArgumentTypeError("an ensemble needs at least 2 runs")
    return value


def _non_negative(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="permgauss", description=__doc__.splitlines()[0])
    parser.add_argument("--config", type=Path, help="flat JSON file of option defaults")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", type=Path, default=Path("out"), help="output root (default: out)")

    g = sub.add_parser("generate", help="train ensembles and write snapshot stores")
    common(g)
    g.add_argument("--mnist-dir", type=Path, default=Path("data/mnist"))
    g.add_argument("--scheme", choices=("gaussian", "uniform", "both"), default="gaussian")
    g.add_argument("--runs", type=_positive_runs, default=20)
    g.add_argument("--epochs", type=_non_negative, default=10)
    g.add_argument("--batch", type=int, default=100)
    g.add_argument("--lr", type=float, default=0.01)
    g.add_argument("--l2", type=float, default=0.0, help="weight of the squared-weight penalty")
    g.add_argument("--width", type=int, nargs="*", default=None,
                   help="hidden widths for the 784-a-a-10 variant; omit for the 784-10-10-10-10 net")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--workers", type=int, default=1)

    def analysis_cmd(name, help_text):
        p = sub.add_parser(name, help=help_text)
        common(p)
        p.add_argument("--cell", action="append", help="restrict to these cells (default: every store)")
        p.add_argument("--predict-ids", type=parse_ids, default=CQ_IDS)
        p.add_argument("--clip", action="store_true",
                       help="project non-PSD fitted models onto the PSD cone before distances")
        return p

    analysis_cmd("invariants", "ensemble statistics of all 52 invariants and accuracies")
    analysis_cmd("fit", "fitted 13-parameter models per layer and epoch")
    analysis_cmd("predict", "fitted-model cubic/quartic predictions, deviations, normalized change")
    analysis_cmd("deviations", "linear/quadratic deviations from initialization and layer PMCC")
    analysis_cmd("wasserstein", "distance of each fitted model to the initialization model")
    analysis_cmd("analyze", "all analysis tables")

    r = sub.add_parser("report", help="assemble cross-cell tables and series from analysis tables")
    common(r)
    r.add_argument("--figures", action="store_true", help="also render PNG figures (needs matplotlib)")
    return parser


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config is None:
        return args
    try:
        config = json.loads(args.config.read_text())
    except FileNotFoundError:
        parser.exit(EXIT_MISSING, f"permgauss: config file {args.config} not found\n")
    if not isinstance(config, dict) or any(isinstance(v, dict) for v in config.values()):
        parser.error("config must be a flat JSON object")
    subparser = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest: a for a in subparser._actions}
    defaults = {}
    for key, value in config.items():
        dest = key.replace("-", "_")
        if dest not in known:
            continue  # keys for other subcommands are ignored
        action = known[dest]
        if action.type is not None and value is not None:
            value = [action.type(str(v)) for v in value] if isinstance(value, list) else action.type(str(value))
        defaults[dest] = value
    subparser.set_defaults(**defaults)
    return parser.parse_args(argv)


def _cells_for(args) -> list[tuple[str, NetConfig]]:
    schemes = ("gaussian", "uniform") if args.scheme == "both" else (args.scheme,)
    widths = args.width if args.width else [None]
    cells = []
    for scheme in schemes:
        for width in widths:
            layers = DEFAULT_LAYERS if width is None else width_layers(width)
            config = NetConfig(layer_sizes=layers, scheme=scheme, lr=args.lr, batch=args.batch,
                               epochs=args.epochs, l2_lambda=args.l2, runs=args.runs, master_seed=args.seed)
            cells.append((cell_name(scheme, args.l2, width), config))
    return cells


def cmd_generate(args) -> int:
    try:
        data = load_mnist(args.mnist_dir)
    except FileNotFoundError as exc:
        raise CliError(f"MNIST data missing: {exc}") from None
    store_dir = args.out / "stores"
    store_dir.mkdir(parents=True, exist_ok=True)
    status = EXIT_OK
    for name, config in _cells_for(args):
        log.info("cell %s: %d runs x %d epochs, layers %s", name, config.runs, config.epochs, config.layer_sizes)

        def progress(result, name=name):
            print(f"[{name}] run {result.run_index}: final accuracy {result.accuracies[-1]:.4f}",
                  file=sys.stderr, flush=True)

        store = generate_ensemble(config, data, workers=args.workers, progress=progress)
        path = store_dir / f"{name}.pigw"
        write_store(store, path)
        diverged = store.meta["diverged"]
        final = store.accuracies[:, -1]
        if store.runs:
            se = final.std(ddof=1) / store.runs ** 0.5 if store.runs > 1 else float("nan")
            print(f"{name}: {store.runs} runs, epoch {config.epochs} accuracy {final.mean():.4f} +- {se:.4f} -> {path}")
        if diverged:
            print(f"{name}: diverged runs {diverged}", file=sys.stderr)
            status = EXIT_DIVERGED
    return status


def _load_stores(args) -> dict:
    store_dir = args.out / "stores"
    if args.cell:
        paths = {c: store_dir / f"{c}.pigw" for c in args.cell}
        missing = [str(p) for p in paths.values() if not p.exists()]
        if missing:
            raise CliError("missing snapshot stores: " + ", ".join(missing))
    else:
        paths = {p.stem: p for p in sorted(store_dir.glob("*.pigw"))}
        if not paths:
            raise CliError(f"no snapshot stores in {store_dir}")
    stores = {}
    for name, path in paths.items():
        try:
            stores[name] = read_store(path)
        except (FormatError, DataError, OSError) as exc:
            raise CliError(f"unreadable store {path}: {exc}") from None
    return stores


def cmd_analysis(args) -> int:
    groups = tuple(TABLE_GROUPS) if args.command == "analyze" else (args.command,)
    for name, store in _load_stores(args).items():
        try:
            analysis = CellAnalysis(store, predict_ids=args.predict_ids, clip=args.clip)
        except AnalysisError as exc:
            raise CliError(f"{name}: {exc}") from None
        written = write_tables(analysis, args.out / "analysis" / name, groups)
        print(f"{name}: wrote {len(written)} files to {args.out / 'analysis' / name}")
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        written = build_report(args.out / "analysis", args.out / "report", figures=args.figures)
    except MissingInputs as exc:
        raise CliError(str(exc)) from None
    print(f"wrote {len(written)} files to {args.out / 'report'}")
    return EXIT_OK


def main(argv=None) -> int:
    args = parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"generate": cmd_generate, "report": cmd_report}.get(args.command, cmd_analysis)
    try:
        return handler(args)
    except CliError as exc:
        print(f"permgauss: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
