"""Per-run tallies gated by the measurement window, and mean/std across runs."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import Sequence

from .errors import AlreadyOpen, EmptyInput, MixedCells
from .maintenance import RING_LABEL
from .topology import SplitCause, TransferKind, TransferReport

BYTE_CATEGORIES = ("bytes_merge", "bytes_relocation", "bytes_maintenance", "bytes_split", "bytes_join")
# the categories stacked in the per-delta data-transfer plots
CORE_BYTE_CATEGORIES = ("bytes_merge", "bytes_relocation", "bytes_maintenance")


@dataclass
class RunMetrics:
    merges: int = 0
    splits_size: int = 0
    splits_overload: int = 0
    relocations_push: int = 0
    relocations_pull: int = 0
    joins: int = 0
    bytes_merge: int = 0
    bytes_relocation: int = 0
    bytes_maintenance: int = 0
    bytes_maintenance_group: int = 0
    bytes_maintenance_ring: int = 0
    bytes_split: int = 0
    bytes_join: int = 0
    final_peers: int = 0
    final_groups: int = 0
    mean_group_state_bytes: float = 0.0
    window_open: bool = False
    cell: tuple | None = field(default=None, compare=False)
    state_sum: float = field(default=0.0, repr=False)
    state_samples: int = field(default=0, repr=False)

    def open_window(self, now: float) -> None:
        if self.window_open:
            raise AlreadyOpen(f"window already open at t={now}")
        cell = self.cell
        for f in fields(self):
            setattr(self, f.name, f.default)
        self.cell = cell
        self.window_open = True

    def record(self, report: TransferReport) -> None:
        if not self.window_open:
            return
        kind = report.kind
        if kind is TransferKind.MERGE:
            self.merges += report.count
            self.bytes_merge += report.bytes
        elif kind is TransferKind.RELOCATION:
            if report.detail == "pull":
                self.relocations_pull += report.count
            else:
                self.relocations_push += report.count
            self.bytes_relocation += report.bytes
        elif kind is TransferKind.SPLIT:
            if report.detail == SplitCause.OVERLOAD.value:
                self.splits_overload += report.count
            else:
                self.splits_size += report.count
            self.bytes_split += report.bytes
        elif kind is TransferKind.JOIN:
            self.joins += report.count
            self.bytes_join += report.bytes
        elif kind is TransferKind.MAINTENANCE:
            self.bytes_maintenance += report.bytes
            if report.detail == RING_LABEL:
                self.bytes_maintenance_ring += report.bytes
            else:
                self.bytes_maintenance_group += report.bytes

    def sample_state(self, total_bytes: int, n_groups: int) -> None:
        """Add one sample of the mean per-group store to the time average."""
        if not self.window_open or n_groups == 0:
            return
        self.state_sum += total_bytes / n_groups
        self.state_samples += 1
        self.mean_group_state_bytes = self.state_sum / self.state_samples

    @property
    def relocations(self) -> int:
        return self.relocations_push + self.relocations_pull

    @property
    def splits(self) -> int:
        return self.splits_size + self.splits_overload

    def total_bytes(self, core_only: bool = False) -> int:
        cats = CORE_BYTE_CATEGORIES if core_only else BYTE_CATEGORIES
        return sum(getattr(self, c) for c in cats)


METRIC_FIELDS: tuple[str, ...] = tuple(
    f.name
    for f in fields(RunMetrics)
    if f.name not in ("window_open", "cell", "state_sum", "state_samples")
)


def open_window(metrics: RunMetrics, now: float) -> None:
    metrics.open_window(now)


def record(metrics: RunMetrics, report: TransferReport) -> None:
    metrics.record(report)


@dataclass
class CellAggregate:
    cell: tuple | None
    n_runs: int
    means: dict[str, float]
    stds: dict[str, float]


def _mean_std(values: Sequence[float]) -> tuple[float, float]:
    n = len(values)
    if all(isinstance(v, int) for v in values):
        total = sum(values)
        mean = total / n
        if n < 2:
            return mean, 0.0
        # exact integer arithmetic for the sum of squares about the mean
        ss = sum((v * n - total) ** 2 for v in values)
        return mean, math.sqrt(ss / (n * n * (n - 1)))
    mean = math.fsum(values) / n
    if n < 2:
        return mean, 0.0
    return mean, math.sqrt(math.fsum((v - mean) ** 2 for v in values) / (n - 1))


def aggregate(runs: Sequence[RunMetrics]) -> CellAggregate:
    """Mean and sample (n-1) standard deviation of every metric field, plus the
    all-category byte total, in a fixed field order."""
    if not runs:
        raise EmptyInput("no runs to aggregate")
    cells = {r.cell for r in runs}
    if len(cells) > 1:
        raise MixedCells(f"runs span several cells: {sorted(map(str, cells))}")
    means: dict[str, float] = {}
    stds: dict[str, float] = {}
    columns = {name: [getattr(r, name) for r in runs] for name in METRIC_FIELDS}
    columns["bytes_total"] = [r.total_bytes() for r in runs]
    columns["bytes_total_core"] = [r.total_bytes(core_only=True) for r in runs]
    for name, values in columns.items():
        means[name], stds[name] = _mean_std(values)
    return CellAggregate(runs[0].cell, len(runs), means, stds)
