"""Command-line entry point: ``groupdht run | sweep | paper-grid``.

Exit codes: 0 success, 2 configuration error, 3 I/O error.
"""
from __future__ import annotations

import argparse
import dataclasses
import io
import sys

from .config import ExperimentConfig, load_config, render_config
from .errors import InvalidConfig, SimulationError
from .harness import (
    ALLOWED_DELTAS,
    CHURN_LEVELS,
    ExperimentCell,
    IoError,
    RunSettings,
    SweepResult,
    build_simulation,
    csv_header,
    csv_rows,
    emit_csv,
    emit_per_second,
    parse_size_class,
    paper_grid_cells,
    run_sweep,
)
from .metrics import aggregate
from .model import Mode
from .workload import Scenario

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value file with data/timers/maintenance/run overrides")
    p.add_argument("--runs", type=int, help="runs per cell (default 20)")
    p.add_argument("--seed", type=int, help="seed base (default 0)")
    p.add_argument("--peers", type=int, help="initial peer count (default 10000 x scale)")
    p.add_argument("--scale", type=float, help="shrink peers, dataset and churn, e.g. 0.1 for desk runs")
    p.add_argument("--parallelism", type=int, help="concurrent runs (default 1)")
    p.add_argument("--out", help="output path (default stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="groupdht", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one cell and print its aggregate row")
    run.add_argument("--scenario", default="ExitOnly", help="ExitOnly or EnterExit")
    run.add_argument("--churn", type=int, default=100, help="peers removed per churn moment at full scale")
    run.add_argument("--mode", default="FPPR", help="NPPR, Push, Pull or FPPR")
    run.add_argument("--size-class", default="S", help=f"one of {', '.join(ALLOWED_DELTAS)} (or its max size)")
    run.add_argument("--delta", type=int, default=1)
    run.add_argument("--emit-per-second", metavar="PATH", help="also write a per-second time series")
    _common(run)

    sweep = sub.add_parser("sweep", help="run every cell of a grid config file")
    sweep.add_argument("grid", help="config file with grid.* keys")
    _common(sweep)

    grid = sub.add_parser("paper-grid", help="write the full experiment grid as a config file")
    _common(grid)
    return parser


def _load(args: argparse.Namespace, path: str | None) -> ExperimentConfig:
    cfg = load_config(path) if path else ExperimentConfig()
    settings = cfg.settings
    if args.scale is not None:
        settings = dataclasses.replace(settings, scale=args.scale)
    if args.peers is not None:
        settings = dataclasses.replace(settings, n_peers=args.peers)
    cfg.settings = settings
    if args.runs is not None:
        cfg.runs = args.runs
    if args.seed is not None:
        cfg.seed_base = args.seed
    if args.parallelism is not None:
        cfg.parallelism = args.parallelism
    if cfg.runs < 1 or cfg.parallelism < 1:
        raise InvalidConfig("--runs and --parallelism must be >= 1")
    return cfg


def _write(result: SweepResult, out: str | None) -> None:
    if out:
        emit_csv(result, out)
        return
    buf = io.StringIO()
    import csv

    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(csv_header())
    writer.writerows(csv_rows(result))
    sys.stdout.write(buf.getvalue())


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _load(args, args.config)
    cell = ExperimentCell(
        Scenario.parse(args.scenario),
        args.churn,
        Mode.parse(args.mode),
        parse_size_class(args.size_class),
        args.delta,
        cfg.seed_base,
        cfg.runs,
    )
    if args.emit_per_second:
        # sequential so the time series can be collected alongside
        runs, series = [], []
        for i in range(cell.n_runs):
            sim = build_simulation(cell, i, cfg.settings, per_second=True)
            runs.append(sim.run())
            series.extend({"run": i, **row} for row in sim.per_second)
        emit_per_second(series, args.emit_per_second)
        result = SweepResult([aggregate(runs)])
    else:
        result = run_sweep([cell], cfg.parallelism, cfg.settings)
    _write(result, args.out)
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _load(args, args.grid)
    if args.config:
        raise InvalidConfig("sweep reads its settings from the grid file; drop --config")
    result = run_sweep(cfg.cells(), cfg.parallelism, cfg.settings)
    _write(result, args.out)
    print(f"# {len(result.cells)} cells, digest {result.provenance['config_digest']}", file=sys.stderr)
    return EXIT_OK


def cmd_paper_grid(args: argparse.Namespace) -> int:
    cfg = _load(args, args.config)
    cfg.churn = CHURN_LEVELS
    text = render_config(cfg)
    n_cells = len(paper_grid_cells(cfg.seed_base, cfg.runs))
    if args.out:
        try:
            with open(args.out, "w") as fh:
                fh.write(text)
        except OSError as exc:
            raise IoError(f"cannot write {args.out}: {exc}") from exc
    else:
        sys.stdout.write(text)
    print(f"# {n_cells} cells", file=sys.stderr)
    return EXIT_OK


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "paper-grid": cmd_paper_grid}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except IoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (InvalidConfig, SimulationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
