"""One execution: bootstrap, warmup, churn window, settle to quiescence.

Timeline (simulated seconds, one churn cycle per second)::

    [0, bootstrap_s)        peers join one at a time, evenly spaced, with
                            every protocol timer already running
    B = bootstrap_s         last join happened just before
    B + warmup_s            window opens, heat assigned, churn cycle 0
    B + warmup_s + 60       churn over; the run ends once no merge, split or
                            relocation happened for quiet_s, or at most
                            stabilization_cap_s later

With ``bootstrap_s == 0`` the whole bootstrap happens at t=0, each join's
size check resolved before the next join and no relocation taking part.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

from .errors import InsufficientPeers
from .engine import Event, EventKind, Scheduler, rng_substream
from .maintenance import MaintenanceConfig, maintenance_tick, stabilization_tick
from .metrics import RunMetrics
from .model import Mode, Overlay, SizeConfig, TimerConfig
from .topology import (
    Decision,
    JoinPlacement,
    TransferKind,
    TransferReport,
    apply_decision,
    handle_join,
    handle_leave,
    relocation_round,
    size_check,
)
from .workload import (
    ChurnConfig,
    DataConfig,
    assign_heat,
    bootstrap_overlay,
    build_churn_plan,
    generate_dataset,
    pick_victims,
)

TOPOLOGY_KINDS = (TransferKind.MERGE, TransferKind.SPLIT, TransferKind.RELOCATION)


@dataclass(frozen=True)
class SimParams:
    size: SizeConfig
    mode: Mode
    churn: ChurnConfig
    n_peers: int = 10_000
    data: DataConfig = DataConfig()
    timers: TimerConfig = TimerConfig()
    maintenance: MaintenanceConfig = MaintenanceConfig()
    bootstrap_s: float = 1000.0
    join_placement: JoinPlacement = JoinPlacement.UNIFORM_GROUP
    cycle_s: float = 1.0
    warmup_s: float = 60.0
    quiet_s: float = 30.0
    stabilization_cap_s: float = 300.0
    sample_period_s: float = 1.0


@dataclass
class TraceEntry:
    time: float
    kind: str
    info: dict[str, Any] = field(default_factory=dict)


class Simulation:
    """Owns the overlay, scheduler and metrics of a single run."""

    def __init__(
        self,
        params: SimParams,
        seed: int,
        *,
        trace: bool = False,
        per_second: bool = False,
        cell: tuple | None = None,
    ) -> None:
        self.params = params
        self.seed = seed
        self.scheduler = Scheduler()
        self.metrics = RunMetrics(cell=cell)
        self.trace: list[TraceEntry] | None = [] if trace else None
        self.per_second: list[dict[str, Any]] | None = [] if per_second else None
        self.store_digests: dict[str, str] = {}
        self.overlay: Overlay | None = None

        self._rng_size = rng_substream(seed, "size_check")
        self._rng_maint = rng_substream(seed, "maintenance")
        self._rng_churn = rng_substream(seed, "churn")
        self._rng_heat = rng_substream(seed, "heat")
        self._rng_place = rng_substream(seed, "placement")

        self.churn_start = params.bootstrap_s + params.warmup_s
        self.churn_end = self.churn_start + params.churn.churn_cycles * params.cycle_s
        self.last_topology_op = 0.0
        self.finished = False
        self.end_time: float | None = None
        self.initial_peers = 0

    # -- bookkeeping -----------------------------------------------------

    def _log(self, kind: str, **info: Any) -> None:
        if self.trace is not None:
            self.trace.append(TraceEntry(self.scheduler.now, kind, info))

    def _account(self, report: TransferReport | None) -> None:
        if report is None:
            return
        self.metrics.record(report)
        if report.kind in TOPOLOGY_KINDS:
            self.last_topology_op = self.scheduler.now
        if self.trace is not None and report.kind is not TransferKind.MAINTENANCE:
            info = {
                "bytes": report.bytes,
                "detail": report.detail,
                "group": report.group_id,
                "other": report.other_group,
                "peer": report.peer,
            }
            if report.kind is TransferKind.SPLIT:
                ov = self.overlay
                info["sizes"] = (ov.groups[report.group_id].size, ov.groups[report.other_group].size)
            self._log(report.kind.value, **info)

    def _arm_group(self, gid: int) -> None:
        t = self.params.timers
        sched = self.scheduler
        sched.schedule_in(self._rng_size.uniform(t.size_check_min_s, t.size_check_max_s), EventKind.SIZE_CHECK, (gid, True))
        sched.schedule_in(self._rng_maint.uniform(0.0, t.maintenance_period_s), EventKind.MAINTENANCE_TICK, gid)

    # -- event handlers --------------------------------------------------

    def _on_size_check(self, event: Event) -> None:
        gid, periodic = event.data
        overlay = self.overlay
        if gid not in overlay.groups:
            return
        p = self.params
        decision = size_check(overlay, gid, p.size, p.timers)
        if decision is not Decision.NONE:
            pre_sizes = overlay.groups[gid].size
            report = apply_decision(overlay, gid, decision, p.size, None, p.maintenance.control_msg_bytes)
            if report is not None and report.kind is TransferKind.SPLIT:
                self._arm_group(report.other_group)
                self._log("split-parent", group=gid, size=pre_sizes)
            self._account(report)
        if periodic and gid in overlay.groups:
            t = p.timers
            self.scheduler.schedule_in(
                self._rng_size.uniform(t.size_check_min_s, t.size_check_max_s), EventKind.SIZE_CHECK, (gid, True)
            )

    def _on_maintenance(self, event: Event) -> None:
        group = self.overlay.groups.get(event.data)
        if group is None:
            return
        p = self.params
        self._account(maintenance_tick(group, p.timers, p.maintenance, self._rng_maint))
        self.scheduler.schedule_in(p.timers.maintenance_period_s, EventKind.MAINTENANCE_TICK, group.group_id)

    def _on_stabilization(self, event: Event) -> None:
        self._account(stabilization_tick(self.overlay, self.params.maintenance))
        self.scheduler.schedule_in(self.params.maintenance.stabilization_period_s, EventKind.STABILIZATION_TICK)

    def _on_relocation(self, event: Event) -> None:
        p = self.params
        round_index = event.data
        for report in relocation_round(self.overlay, p.mode, p.size, p.timers, self.scheduler.now):
            self._account(report)
        # absolute times keep rounds on exact multiples of the period
        self.scheduler.schedule((round_index + 1) * p.timers.relocation_check_period_s, EventKind.RELOCATION_ROUND, round_index + 1)

    def _on_churn(self, event: Event) -> None:
        moment = event.data
        overlay = self.overlay
        pc = self.params.churn
        victims = pick_victims(overlay, moment.removals, pc.epsilon, self._rng_churn)
        for peer in victims:
            self._log("leave", peer=peer, group=overlay.peer_index[peer])
            self._account(handle_leave(overlay, peer))
        for _ in range(moment.additions):
            self._on_peer_join(event)

    def _on_peer_join(self, event: Event) -> None:
        report = handle_join(
            self.overlay, self.overlay.new_peer_id(), placement=self.params.join_placement, rng=self._rng_place
        )
        self._account(report)
        self.scheduler.schedule(self.scheduler.now, EventKind.SIZE_CHECK, (report.group_id, False))
        if event.data == "last":
            self.initial_peers = self.overlay.live_peers
            self.store_digests["bootstrap"] = self.overlay.store_digest()

    def _on_sample(self, event: Event) -> None:
        ov = self.overlay
        self.metrics.sample_state(ov.total_bytes, len(ov))
        if self.per_second is not None:
            m = self.metrics
            self.per_second.append(
                {
                    "time": self.scheduler.now,
                    "live_peers": ov.live_peers,
                    "groups": len(ov),
                    "merges": m.merges,
                    "splits": m.splits,
                    "relocations": m.relocations,
                    "bytes_merge": m.bytes_merge,
                    "bytes_relocation": m.bytes_relocation,
                    "bytes_maintenance": m.bytes_maintenance,
                    "bytes_split": m.bytes_split,
                    "bytes_join": m.bytes_join,
                }
            )
        self.scheduler.schedule_in(self.params.sample_period_s, EventKind.SAMPLE)

    def _on_phase(self, event: Event) -> None:
        phase = event.data
        now = self.scheduler.now
        if phase == "churn-start":
            self.store_digests["warmup_end"] = self.overlay.store_digest()
            self.metrics.open_window(now)
            assign_heat(self.overlay, self.params.churn.hot_ratio, self._rng_heat)
            self._on_sample(event)
        elif phase == "churn-end":
            self.store_digests["churn_end"] = self.overlay.store_digest()
            self.scheduler.schedule(now + 1.0, EventKind.PHASE_BOUNDARY, "settle")
        elif phase == "settle":
            quiet_since = max(self.last_topology_op, self.churn_end)
            cap = self.churn_end + self.params.stabilization_cap_s
            if now - quiet_since >= self.params.quiet_s or now >= cap:
                self.finished = True
                self.end_time = now
            else:
                self.scheduler.schedule(now + 1.0, EventKind.PHASE_BOUNDARY, "settle")
        self._log("phase", phase=phase)

    # -- driver ----------------------------------------------------------

    def setup(self) -> None:
        p = self.params
        dataset = generate_dataset(p.data, rng_substream(self.seed, "dataset"))
        placement = self._rng_place
        sched = self.scheduler
        if p.bootstrap_s > 0:
            if p.n_peers < p.size.l:
                raise InsufficientPeers(f"{p.n_peers} peers cannot fill a group of {p.size.l}")
            self.overlay = Overlay.single(dataset, salt=placement.getrandbits(64))
            step = p.bootstrap_s / p.n_peers
            for k in range(p.n_peers):
                sched.schedule(k * step, EventKind.PEER_JOIN, "last" if k == p.n_peers - 1 else None)
        else:
            self.overlay = bootstrap_overlay(
                p.n_peers, p.size, dataset, placement, p.timers, p.maintenance.control_msg_bytes, p.join_placement
            )
            self.initial_peers = self.overlay.live_peers
            self.store_digests["bootstrap"] = self.overlay.store_digest()
        for group in self.overlay.ring_order():
            self._arm_group(group.group_id)
        sched.schedule(p.maintenance.stabilization_period_s, EventKind.STABILIZATION_TICK)
        if p.mode is not Mode.NPPR and p.size.delta > 0:
            sched.schedule(p.timers.relocation_check_period_s, EventKind.RELOCATION_ROUND, 1)
        sched.schedule(self.churn_start, EventKind.PHASE_BOUNDARY, "churn-start")
        for moment in build_churn_plan(p.churn).moments:
            sched.schedule(self.churn_start + moment.cycle * p.cycle_s, EventKind.CHURN_MOMENT, moment)
        sched.schedule(self.churn_end, EventKind.PHASE_BOUNDARY, "churn-end")

    def _handlers(self) -> dict:
        return {
            EventKind.SIZE_CHECK: self._on_size_check,
            EventKind.MAINTENANCE_TICK: self._on_maintenance,
            EventKind.STABILIZATION_TICK: self._on_stabilization,
            EventKind.RELOCATION_ROUND: self._on_relocation,
            EventKind.CHURN_MOMENT: self._on_churn,
            EventKind.SAMPLE: self._on_sample,
            EventKind.PHASE_BOUNDARY: self._on_phase,
            EventKind.PEER_JOIN: self._on_peer_join,
        }

    def advance(self, until: float) -> int:
        """Process every event up to and including ``until``."""
        if self.overlay is None:
            self.setup()
        return self.scheduler.run_until(self._handlers(), until=until, stop=lambda: self.finished)

    def run(self) -> RunMetrics:
        if self.overlay is None:
            self.setup()
        self.scheduler.run_until(self._handlers(), stop=lambda: self.finished)
        self.store_digests["run_end"] = self.overlay.store_digest()
        self.metrics.final_peers = self.overlay.live_peers
        self.metrics.final_groups = len(self.overlay)
        return self.metrics
