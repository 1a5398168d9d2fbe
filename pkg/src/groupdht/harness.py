"""Experiment cells, seeded runs, parallel sweeps and CSV emission."""
from __future__ import annotations

import csv
import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from decimal import Decimal
from pathlib import Path
from typing import Iterable, Sequence

from .errors import InvalidConfig, SimulationError
from .maintenance import MaintenanceConfig
from .metrics import METRIC_FIELDS, CellAggregate, RunMetrics, aggregate
from .model import Mode, SizeConfig, TimerConfig
from .simulation import SimParams, Simulation
from .topology import JoinPlacement
from .workload import ChurnConfig, DataConfig, Scenario

SIZE_LOWER = 4
SIZE_CLASSES: dict[str, int] = {"XS": 8, "S": 11, "M": 16, "L": 32, "XL": 64}
ALLOWED_DELTAS: dict[str, tuple[int, ...]] = {
    "XS": (0, 1, 2),
    "S": (0, 1, 2, 3),
    "M": (0, 1, 2, 4, 6),
    "L": (0, 1, 2, 4, 6, 8, 10, 12, 14),
    "XL": (0, 1, 2) + tuple(range(4, 31, 2)),
}
CHURN_LEVELS = (100, 200, 300)
FULL_PEERS = 10_000

AGGREGATE_FIELDS: tuple[str, ...] = METRIC_FIELDS + ("bytes_total", "bytes_total_core")


class IoError(SimulationError, OSError):
    """Raised when results cannot be written."""


def size_class_of(h: int) -> str:
    for name, value in SIZE_CLASSES.items():
        if value == h:
            return name
    raise InvalidConfig(f"no size class has maximum {h}")


def parse_size_class(text: str) -> str:
    key = text.strip().upper()
    if key in SIZE_CLASSES:
        return key
    if key.isdigit():
        return size_class_of(int(key))
    raise InvalidConfig(f"unknown size class {text!r}; expected one of {', '.join(SIZE_CLASSES)}")


@dataclass(frozen=True)
class ExperimentCell:
    scenario: Scenario
    c: int
    mode: Mode
    size_class: str
    delta: int
    seed_base: int = 0
    n_runs: int = 20

    def __post_init__(self) -> None:
        if self.size_class not in SIZE_CLASSES:
            raise InvalidConfig(f"unknown size class {self.size_class!r}")
        if self.delta not in ALLOWED_DELTAS[self.size_class]:
            raise InvalidConfig(
                f"delta {self.delta} not allowed for size class {self.size_class}; "
                f"allowed: {ALLOWED_DELTAS[self.size_class]}"
            )
        if self.c < 1:
            raise InvalidConfig("c must be >= 1")
        if self.n_runs < 1:
            raise InvalidConfig("n_runs must be >= 1")

    @property
    def key(self) -> tuple:
        return (self.scenario.value, self.c, self.mode.value, self.size_class, self.delta)

    @property
    def size_config(self) -> SizeConfig:
        return SizeConfig.from_delta(SIZE_LOWER, SIZE_CLASSES[self.size_class], self.delta)


@dataclass(frozen=True)
class RunSettings:
    """Everything besides the cell that shapes a run.  ``scale`` shrinks the
    peer count, the dataset and the churn amount proportionally."""

    scale: float = 1.0
    n_peers: int | None = None
    data: DataConfig = DataConfig()
    timers: TimerConfig = TimerConfig()
    maintenance: MaintenanceConfig = MaintenanceConfig()
    bootstrap_s: float = 1000.0
    join_placement: JoinPlacement = JoinPlacement.UNIFORM_GROUP
    cycle_s: float = 1.0
    warmup_s: float = 60.0
    quiet_s: float = 30.0
    stabilization_cap_s: float = 300.0

    def __post_init__(self) -> None:
        if not 0.0 < self.scale <= 1.0:
            raise InvalidConfig("scale must lie in (0, 1]")
        if self.n_peers is not None and self.n_peers < 1:
            raise InvalidConfig("peers must be >= 1")

    def peers(self) -> int:
        return self.n_peers if self.n_peers is not None else max(1, round(FULL_PEERS * self.scale))

    def params_for(self, cell: ExperimentCell) -> SimParams:
        c = max(1, round(cell.c * self.scale))
        return SimParams(
            size=cell.size_config,
            mode=cell.mode,
            churn=ChurnConfig(cell.scenario, c),
            n_peers=self.peers(),
            data=self.data.scaled(self.scale) if self.scale != 1.0 else self.data,
            timers=self.timers,
            maintenance=self.maintenance,
            bootstrap_s=self.bootstrap_s,
            join_placement=self.join_placement,
            cycle_s=self.cycle_s,
            warmup_s=self.warmup_s,
            quiet_s=self.quiet_s,
            stabilization_cap_s=self.stabilization_cap_s,
        )

    def digest_fields(self) -> dict:
        d = asdict(self)
        d["n_peers"] = self.peers()
        return d


def run_seed(seed_base: int, cell_key: tuple, run_index: int) -> int:
    text = json.dumps([seed_base, list(cell_key), run_index])
    return int.from_bytes(hashlib.blake2b(text.encode(), digest_size=8).digest(), "big")


def build_simulation(
    cell: ExperimentCell, run_index: int, settings: RunSettings = RunSettings(), **kwargs
) -> Simulation:
    seed = run_seed(cell.seed_base, cell.key, run_index)
    return Simulation(settings.params_for(cell), seed, cell=cell.key, **kwargs)


def run_single(cell: ExperimentCell, run_index: int, settings: RunSettings = RunSettings()) -> RunMetrics:
    return build_simulation(cell, run_index, settings).run()


def _run_job(job: tuple[ExperimentCell, int, RunSettings]) -> RunMetrics:
    return run_single(*job)


@dataclass
class SweepResult:
    cells: list[CellAggregate]
    provenance: dict[str, str] = field(default_factory=dict)


def config_digest(cells: Sequence[ExperimentCell], settings: RunSettings) -> str:
    payload = {
        "cells": [list(c.key) + [c.seed_base, c.n_runs] for c in cells],
        "settings": settings.digest_fields(),
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True, default=str).encode()).hexdigest()


def run_sweep(
    cells: Sequence[ExperimentCell],
    parallelism: int = 1,
    settings: RunSettings = RunSettings(),
) -> SweepResult:
    """Run every (cell, run_index) independently and aggregate per cell.
    Results are ordered by cell key and do not depend on ``parallelism``."""
    from . import __version__

    if not cells:
        raise InvalidConfig("sweep needs at least one cell")
    if parallelism < 1:
        raise InvalidConfig("parallelism must be >= 1")
    ordered = sorted(cells, key=lambda c: (c.key, c.seed_base, c.n_runs))
    jobs = [(cell, i, settings) for cell in ordered for i in range(cell.n_runs)]
    if parallelism == 1:
        results = [_run_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(_run_job, jobs, chunksize=1))
    aggregates = []
    pos = 0
    for cell in ordered:
        aggregates.append(aggregate(results[pos : pos + cell.n_runs]))
        pos += cell.n_runs
    seed_bases = sorted({c.seed_base for c in ordered})
    provenance = {
        "config_digest": config_digest(ordered, settings),
        "seed_base": ",".join(map(str, seed_bases)),
        "version": __version__,
    }
    return SweepResult(aggregates, provenance)


# -- CSV -----------------------------------------------------------------

KEY_COLUMNS = ("scenario", "c", "mode", "size_class", "delta", "n_runs")


def csv_header() -> list[str]:
    cols = list(KEY_COLUMNS)
    for name in AGGREGATE_FIELDS:
        cols += [f"{name}_mean", f"{name}_std"]
    return cols


def format_number(x: float | int) -> str:
    """Plain positional decimal: no exponent, no thousands separator."""
    if isinstance(x, int):
        return str(x)
    d = Decimal(repr(float(x)))
    text = format(d, "f")
    if "." in text:
        text = text.rstrip("0").rstrip(".")
    return text or "0"


def csv_rows(result: SweepResult) -> list[list[str]]:
    rows = []
    for agg in result.cells:
        scenario, c, mode, size_class, delta = agg.cell
        row = [scenario, str(c), mode, size_class, str(delta), str(agg.n_runs)]
        for name in AGGREGATE_FIELDS:
            row += [format_number(agg.means[name]), format_number(agg.stds[name])]
        rows.append(row)
    return rows


def emit_csv(result: SweepResult, path: str | Path) -> None:
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(csv_header())
            writer.writerows(csv_rows(result))
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def emit_per_second(rows: Iterable[dict], path: str | Path) -> None:
    rows = list(rows)
    try:
        with open(path, "w", newline="") as fh:
            if not rows:
                return
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
            writer.writeheader()
            for r in rows:
                writer.writerow({k: format_number(v) for k, v in r.items()})
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


# -- grid ----------------------------------------------------------------


def paper_grid_cells(seed_base: int = 0, n_runs: int = 20) -> list[ExperimentCell]:
    """Every scenario x churn level x mode x (size class, delta) column."""
    cells = []
    for scenario in Scenario:
        for c in CHURN_LEVELS:
            for mode in Mode:
                for size_class, deltas in ALLOWED_DELTAS.items():
                    for delta in deltas:
                        cells.append(ExperimentCell(scenario, c, mode, size_class, delta, seed_base, n_runs))
    return cells


def with_runs(cells: Iterable[ExperimentCell], n_runs: int) -> list[ExperimentCell]:
    return [replace(c, n_runs=n_runs) for c in cells]
