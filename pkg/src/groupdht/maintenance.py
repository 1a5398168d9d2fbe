"""Background control traffic.  Pure accounting: nothing here touches
membership, arcs or stores.

Intra-group maintenance fires per group with a fixed probability each period.
A firing costs one digest message per member, a heartbeat between every
ordered pair of members, and an object-digest reconciliation for each member
that entered the group since the last firing.  Ring maintenance (successor,
predecessor, fingers, passive view) is charged per live peer every
stabilization period.
"""
from __future__ import annotations

import random
from dataclasses import dataclass

from .errors import InvalidConfig
from .model import Group, Overlay, TimerConfig
from .topology import ReportSink, TransferKind, TransferReport, emit

GROUP_LABEL = "group"
RING_LABEL = "ring"


@dataclass(frozen=True)
class MaintenanceConfig:
    control_msg_bytes: int = 128
    stabilization_period_s: float = 5.0
    fingers_per_group: int = 8
    passive_view_size: int = 8
    heartbeat_bytes: int = 128
    digest_entry_bytes: int = 16

    def __post_init__(self) -> None:
        counts = (
            self.control_msg_bytes,
            self.fingers_per_group,
            self.passive_view_size,
            self.heartbeat_bytes,
            self.digest_entry_bytes,
        )
        if min(counts) < 0:
            raise InvalidConfig("maintenance byte sizes and counts must be >= 0")
        if self.stabilization_period_s <= 0:
            raise InvalidConfig("stabilization_period_s must be positive")


def group_maintenance_bytes(group: Group, cfg: MaintenanceConfig) -> int:
    n = group.size
    digest = n * cfg.control_msg_bytes + n * (n - 1) * cfg.heartbeat_bytes
    repair = len(group.pending_sync) * len(group.store) * cfg.digest_entry_bytes
    return digest + repair


def maintenance_tick(
    group: Group,
    timers: TimerConfig,
    cfg: MaintenanceConfig,
    rng: random.Random,
    metrics: ReportSink | None = None,
) -> TransferReport | None:
    if rng.random() >= timers.maintenance_probability:
        return None
    cost = group_maintenance_bytes(group, cfg)
    group.pending_sync.clear()
    return emit(
        metrics,
        TransferReport(TransferKind.MAINTENANCE, cost, detail=GROUP_LABEL, group_id=group.group_id),
    )


def stabilization_bytes(overlay: Overlay, cfg: MaintenanceConfig) -> int:
    per_peer = (2 + cfg.fingers_per_group + cfg.passive_view_size) * cfg.control_msg_bytes
    return per_peer * sum(g.size for g in overlay.groups.values())


def stabilization_tick(overlay: Overlay, cfg: MaintenanceConfig, metrics: ReportSink | None = None) -> TransferReport:
    return emit(
        metrics,
        TransferReport(TransferKind.MAINTENANCE, stabilization_bytes(overlay, cfg), detail=RING_LABEL),
    )
