"""Flat ``key = value`` configuration files.

Lines are ``section.field = value``; ``#`` starts a comment.  Sections:

``data.*``         DataConfig fields (before scaling)
``timers.*``       TimerConfig fields
``maintenance.*``  MaintenanceConfig fields
``run.*``          scale, peers, bootstrap_s, join_placement, cycle_s,
                   warmup_s, quiet_s, stabilization_cap_s
``grid.*``         scenarios, churn, modes, size_classes, deltas
                   (comma lists; ``deltas = all`` takes every allowed delta)
top level          seed_base, runs, parallelism
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .errors import InvalidConfig
from .harness import ALLOWED_DELTAS, CHURN_LEVELS, SIZE_CLASSES, ExperimentCell, RunSettings, parse_size_class
from .maintenance import MaintenanceConfig
from .model import Mode, TimerConfig
from .topology import JoinPlacement
from .workload import DataConfig, Scenario

RUN_KEYS = ("scale", "peers", "bootstrap_s", "join_placement", "cycle_s", "warmup_s", "quiet_s", "stabilization_cap_s")
GRID_KEYS = ("scenarios", "churn", "modes", "size_classes", "deltas")
TOP_KEYS = ("seed_base", "runs", "parallelism")


def parse_lines(text: str) -> dict[str, str]:
    entries: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidConfig(f"line {lineno}: expected key = value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise InvalidConfig(f"line {lineno}: empty key")
        if key in entries:
            raise InvalidConfig(f"line {lineno}: duplicate key {key!r}")
        entries[key] = value
    return entries


def _coerce(value: str, kind: type, key: str):
    try:
        if kind is int:
            number = float(value)
            if not number.is_integer():
                raise ValueError(value)
            return int(number)
        if kind is float:
            return float(value)
    except ValueError as exc:
        raise InvalidConfig(f"{key}: cannot read {value!r} as {kind.__name__}") from exc
    return value


def _build(cls, section: str, entries: dict[str, str], base):
    known = {f.name: f for f in dataclasses.fields(cls)}
    updates = {}
    for key, value in entries.items():
        prefix, _, name = key.partition(".")
        if prefix != section:
            continue
        if name not in known:
            raise InvalidConfig(f"unknown key {key!r}")
        # annotations are strings under postponed evaluation
        kind = float if known[name].type == "float" else int
        updates[name] = _coerce(value, kind, key)
    return dataclasses.replace(base, **updates)


def _split_list(value: str) -> list[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


@dataclass
class ExperimentConfig:
    settings: RunSettings = field(default_factory=RunSettings)
    seed_base: int = 0
    runs: int = 20
    parallelism: int = 1
    scenarios: tuple[Scenario, ...] = tuple(Scenario)
    churn: tuple[int, ...] = CHURN_LEVELS
    modes: tuple[Mode, ...] = tuple(Mode)
    size_classes: tuple[str, ...] = tuple(SIZE_CLASSES)
    deltas: tuple[int, ...] | None = None  # None: every allowed delta

    def cells(self) -> list[ExperimentCell]:
        cells = []
        for scenario in self.scenarios:
            for c in self.churn:
                for mode in self.modes:
                    for size_class in self.size_classes:
                        allowed = ALLOWED_DELTAS[size_class]
                        deltas = allowed if self.deltas is None else self.deltas
                        for delta in deltas:
                            cells.append(ExperimentCell(scenario, c, mode, size_class, delta, self.seed_base, self.runs))
        return cells


def parse_config(text: str) -> ExperimentConfig:
    entries = parse_lines(text)
    sections = {"data", "timers", "maintenance", "run", "grid"}
    for key in entries:
        prefix, dot, name = key.partition(".")
        if dot and prefix not in sections:
            raise InvalidConfig(f"unknown section in {key!r}")
        if not dot and key not in TOP_KEYS:
            raise InvalidConfig(f"unknown key {key!r}")
        if prefix == "run" and name not in RUN_KEYS:
            raise InvalidConfig(f"unknown key {key!r}")
        if prefix == "grid" and name not in GRID_KEYS:
            raise InvalidConfig(f"unknown key {key!r}")

    data = _build(DataConfig, "data", entries, DataConfig())
    timers = _build(TimerConfig, "timers", entries, TimerConfig())
    maintenance = _build(MaintenanceConfig, "maintenance", entries, MaintenanceConfig())
    run: dict = {}
    for name in RUN_KEYS:
        key = f"run.{name}"
        if key not in entries:
            continue
        value = entries[key]
        if name == "peers":
            run["n_peers"] = _coerce(value, int, key)
        elif name == "join_placement":
            run["join_placement"] = JoinPlacement.parse(value)
        else:
            run[name] = _coerce(value, float, key)
    settings = RunSettings(data=data, timers=timers, maintenance=maintenance, **run)

    cfg = ExperimentConfig(settings=settings)
    for name in TOP_KEYS:
        if name in entries:
            setattr(cfg, name, _coerce(entries[name], int, name))
    if "grid.scenarios" in entries:
        cfg.scenarios = tuple(Scenario.parse(v) for v in _split_list(entries["grid.scenarios"]))
    if "grid.churn" in entries:
        cfg.churn = tuple(_coerce(v, int, "grid.churn") for v in _split_list(entries["grid.churn"]))
    if "grid.modes" in entries:
        cfg.modes = tuple(Mode.parse(v) for v in _split_list(entries["grid.modes"]))
    if "grid.size_classes" in entries:
        cfg.size_classes = tuple(parse_size_class(v) for v in _split_list(entries["grid.size_classes"]))
    if "grid.deltas" in entries and entries["grid.deltas"].lower() != "all":
        cfg.deltas = tuple(_coerce(v, int, "grid.deltas") for v in _split_list(entries["grid.deltas"]))
    if cfg.runs < 1 or cfg.parallelism < 1:
        raise InvalidConfig("runs and parallelism must be >= 1")
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        from .harness import IoError

        raise IoError(f"cannot read {path}: {exc}") from exc
    return parse_config(text)


def _fmt(value) -> str:
    if hasattr(value, "value"):
        return str(value.value)
    return str(value)


def render_config(cfg: ExperimentConfig) -> str:
    """Inverse of :func:`parse_config`: every key spelled out."""
    s = cfg.settings
    lines = [f"seed_base = {cfg.seed_base}", f"runs = {cfg.runs}", f"parallelism = {cfg.parallelism}", ""]
    lines.append(f"run.scale = {s.scale}")
    if s.n_peers is not None:
        lines.append(f"run.peers = {s.n_peers}")
    for name in RUN_KEYS[2:]:
        lines.append(f"run.{name} = {_fmt(getattr(s, name))}")
    for section, obj in (("data", s.data), ("timers", s.timers), ("maintenance", s.maintenance)):
        lines.append("")
        for f in dataclasses.fields(obj):
            lines.append(f"{section}.{f.name} = {getattr(obj, f.name)}")
    lines.append("")
    lines.append("grid.scenarios = " + ",".join(sc.value for sc in cfg.scenarios))
    lines.append("grid.churn = " + ",".join(map(str, cfg.churn)))
    lines.append("grid.modes = " + ",".join(m.value for m in cfg.modes))
    lines.append("grid.size_classes = " + ",".join(cfg.size_classes))
    lines.append("grid.deltas = " + ("all" if cfg.deltas is None else ",".join(map(str, cfg.deltas))))
    return "\n".join(lines) + "\n"
