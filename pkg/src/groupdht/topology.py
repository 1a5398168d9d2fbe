"""Group-size state machine: merges, splits, preemptive peer relocation,
joins and leaves, each reporting the bytes it moves.

Byte model: every member of a group replicates the whole group store, so a
peer entering a group (join, relocation) downloads the destination store, and
a merge costs every member the half of the merged store it did not hold.
Splits only exchange control messages.
"""
from __future__ import annotations

import random
from dataclasses import dataclass
from enum import Enum
from typing import Protocol

from .errors import InvalidConfig, LastGroup, TooSmallToSplit, UnknownGroup
from .model import (
    RING_MASK,
    Group,
    Mode,
    Overlay,
    SizeConfig,
    TimerConfig,
    peer_position,
    ring_offset,
)

DEFAULT_CONTROL_MSG_BYTES = 128


class SplitCause(Enum):
    SIZE_LIMIT = "SizeLimit"
    OVERLOAD = "Overload"


class TransferKind(Enum):
    MERGE = "Merge"
    RELOCATION = "Relocation"
    MAINTENANCE = "Maintenance"
    SPLIT = "Split"
    JOIN = "Join"


@dataclass(frozen=True)
class TransferReport:
    kind: TransferKind
    bytes: int
    count: int = 1
    # push/pull for relocations, split cause, maintenance sub-label, "forced" merges
    detail: str | None = None
    group_id: int | None = None
    other_group: int | None = None
    peer: int | None = None


class ReportSink(Protocol):
    def record(self, report: TransferReport) -> None: ...


class Decision(Enum):
    NONE = "none"
    MERGE = "merge"
    SPLIT_SIZE = "split-size"
    SPLIT_OVERLOAD = "split-overload"


def emit(metrics: ReportSink | None, report: TransferReport) -> TransferReport:
    if metrics is not None:
        metrics.record(report)
    return report


def compute_load(overlay: Overlay, gid: int) -> float:
    """Stored bytes of ``gid`` relative to the mean over all groups."""
    group = overlay.group(gid)
    mean = overlay.mean_stored_bytes
    if mean == 0:
        return 1.0
    return group.stored_bytes / mean


def _distinct_keys(group: Group, at_least: int = 2) -> bool:
    keys: set[int] = set()
    for obj in group.store:
        keys.add(obj.key)
        if len(keys) >= at_least:
            return True
    return False


def size_check(overlay: Overlay, gid: int, cfg: SizeConfig, timers: TimerConfig) -> Decision:
    """Decide the topology change a group needs right now.

    Limits are inclusive: only sizes strictly outside ``[l, h]`` act.  An
    under-sized group merges before anything else is considered; an
    overloaded group splits only if each half keeps ``l`` members and its
    store spans at least two keys.
    """
    group = overlay.group(gid)
    size = group.size
    if size < cfg.l:
        return Decision.MERGE if len(overlay) > 1 else Decision.NONE
    if size > cfg.h:
        return Decision.SPLIT_SIZE
    if (
        size >= 2 * cfg.l
        and compute_load(overlay, gid) > timers.load_threshold
        and _distinct_keys(group)
    ):
        return Decision.SPLIT_OVERLOAD
    return Decision.NONE


# -- merge ----------------------------------------------------------------


def merge_partner(overlay: Overlay, gid: int) -> int:
    """Ring neighbour with the smaller store; ties go to the successor."""
    pred, succ = overlay.ring_neighbors(gid)
    if overlay.groups[pred].stored_bytes < overlay.groups[succ].stored_bytes:
        return pred
    return succ


def _absorb(overlay: Overlay, keeper_id: int, gone_id: int) -> Group:
    keeper = overlay.groups[keeper_id]
    gone = overlay.groups[gone_id]
    _, succ_of_gone = overlay.ring_neighbors(gone_id)
    if succ_of_gone == keeper_id:
        new_start, new_end = gone.range_start, keeper.range_end
    else:
        new_start, new_end = keeper.range_start, gone.range_end
    overlay.remove_group(gone_id)
    overlay.move_start(keeper, new_start)
    keeper.range_end = new_end
    keeper.store.extend(gone.store)
    keeper.stored_bytes += gone.stored_bytes
    overlay.total_bytes += gone.stored_bytes
    overlay.total_objects += len(gone.store)
    keeper.members |= gone.members
    for peer in gone.members:
        overlay.peer_index[peer] = keeper_id
    keeper.last_relocation_at.update(gone.last_relocation_at)
    return keeper


def merge(overlay: Overlay, gid: int, metrics: ReportSink | None = None, *, detail: str | None = None) -> TransferReport:
    """Fold ``gid`` into its smaller-stored neighbour.

    Every peer ends up holding the union store, so the cost is each side's
    member count times the other side's stored bytes.  The merged group keeps
    the absorber's id and heat.
    """
    group = overlay.group(gid)
    if len(overlay) == 1:
        raise LastGroup(gid)
    keeper_id = merge_partner(overlay, gid)
    keeper = overlay.groups[keeper_id]
    cost = keeper.size * group.stored_bytes + group.size * keeper.stored_bytes
    merged = _absorb(overlay, keeper_id, gid)
    merged.pending_sync |= merged.members
    return emit(
        metrics,
        TransferReport(TransferKind.MERGE, cost, detail=detail, group_id=keeper_id, other_group=gid),
    )


# -- split ----------------------------------------------------------------


def _cut_index(weights: list[tuple[int, int]], target: float) -> int | None:
    """Index into distinct-key runs ``[(offset, weight), ...]`` where the right
    half starts, chosen so the left prefix weight is closest to ``target``.
    Ties favour the earlier cut."""
    best, best_gap = None, None
    prefix = 0
    for i in range(1, len(weights)):
        prefix += weights[i - 1][1]
        gap = abs(prefix - target)
        if best_gap is None or gap < best_gap:
            best, best_gap = i, gap
    return best


def split_boundary(group: Group, cause: SplitCause) -> int:
    """Key where the right child's arc begins.

    Overload splits balance stored bytes; size splits balance object count.
    Objects sharing a key never straddle the cut.  Without two distinct keys
    the arc is halved geometrically.
    """
    runs: list[tuple[int, int]] = []  # (offset from range_start, weight)
    for obj in group.sorted_store():
        off = ring_offset(group.range_start, obj.key)
        w = obj.size_bytes if cause is SplitCause.OVERLOAD else 1
        if runs and runs[-1][0] == off:
            runs[-1] = (off, runs[-1][1] + w)
        else:
            runs.append((off, w))
    total = sum(w for _, w in runs)
    idx = _cut_index(runs, total / 2)
    if idx is None:
        offset = group.width // 2
    else:
        offset = runs[idx][0]
    return (group.range_start + offset) & RING_MASK


def split(
    overlay: Overlay,
    gid: int,
    cause: SplitCause,
    cfg: SizeConfig,
    metrics: ReportSink | None = None,
    control_msg_bytes: int = DEFAULT_CONTROL_MSG_BYTES,
) -> TransferReport:
    """Divide a group in two.

    Members are sorted by id and dealt alternately, so the halves differ by at
    most one.  The child holding the lower arc keeps the parent id; the other
    gets a fresh id (``report.other_group``).  Both inherit the parent heat.
    """
    group = overlay.group(gid)
    if group.size < 2 * cfg.l:
        raise TooSmallToSplit(f"group {gid} has {group.size} < {2 * cfg.l} members")
    ordered = sorted(group.members)
    low_half, high_half = set(ordered[0::2]), set(ordered[1::2])
    boundary = split_boundary(group, cause)
    cut = ring_offset(group.range_start, boundary)

    parent_members = group.size
    left_store, right_store = [], []
    for obj in group.store:
        (left_store if ring_offset(group.range_start, obj.key) < cut else right_store).append(obj)

    right = Group(
        overlay.new_group_id(),
        boundary,
        group.range_end,
        members=high_half,
        store=right_store,
        hot=group.hot,
        last_relocation_at={p: t for p, t in group.last_relocation_at.items() if p in high_half},
        pending_sync=group.pending_sync & high_half,
    )
    overlay.total_bytes -= right.stored_bytes
    overlay.total_objects -= len(right_store)
    group.range_end = boundary
    group.members = low_half
    group.store = left_store
    group.stored_bytes -= right.stored_bytes
    group.last_relocation_at = {p: t for p, t in group.last_relocation_at.items() if p in low_half}
    group.pending_sync &= low_half
    overlay.insert_group(right)

    return emit(
        metrics,
        TransferReport(
            TransferKind.SPLIT,
            parent_members * control_msg_bytes,
            detail=cause.value,
            group_id=gid,
            other_group=right.group_id,
        ),
    )


# -- preemptive relocation -------------------------------------------------


def _eligible_peer(group: Group, now: float, cooldown: float) -> int | None:
    best = None
    stamps = group.last_relocation_at
    for peer in group.members:
        last = stamps.get(peer)
        if last is not None and now - last < cooldown:
            continue
        if best is None or peer > best:
            best = peer
    return best


def _relocate(
    overlay: Overlay, peer: int, dest: int, now: float, direction: str, metrics: ReportSink | None
) -> TransferReport:
    src = overlay.transfer_member(peer, dest)
    target = overlay.groups[dest]
    target.last_relocation_at[peer] = now
    target.pending_sync.add(peer)
    return emit(
        metrics,
        TransferReport(
            TransferKind.RELOCATION,
            target.stored_bytes,
            detail=direction,
            group_id=dest,
            other_group=src,
            peer=peer,
        ),
    )


def relocation_round(
    overlay: Overlay,
    mode: Mode,
    cfg: SizeConfig,
    timers: TimerConfig,
    now: float,
    metrics: ReportSink | None = None,
) -> list[TransferReport]:
    """One periodic relocation check over the whole overlay.

    Push pass: groups above ``h_soft``, by ascending id, each hand their
    highest-id eligible peer to the currently smallest group below
    ``l_soft``.  Pull pass: groups below ``l_soft``, by ascending id, each
    take one eligible peer from the currently largest group above ``h_soft``.
    Peers relocated less than a cooldown ago are not eligible.
    """
    reports: list[TransferReport] = []
    if mode is Mode.NPPR or cfg.delta == 0:
        return reports
    groups = overlay.groups
    cooldown = timers.relocation_cooldown_s

    if mode.push:
        donors = sorted(g.group_id for g in groups.values() if g.size > cfg.h_soft)
        recipients = [g.group_id for g in groups.values() if g.size < cfg.l_soft]
        for donor in donors:
            if not recipients:
                break
            peer = _eligible_peer(groups[donor], now, cooldown)
            if peer is None:
                continue
            dest = min(recipients, key=lambda r: (groups[r].size, r))
            reports.append(_relocate(overlay, peer, dest, now, "push", metrics))
            if groups[dest].size >= cfg.l_soft:
                recipients.remove(dest)

    if mode.pull:
        recipients = sorted(g.group_id for g in groups.values() if g.size < cfg.l_soft)
        donors = [g.group_id for g in groups.values() if g.size > cfg.h_soft]
        for dest in recipients:
            if not donors:
                break
            by_size = sorted(donors, key=lambda d: (-groups[d].size, d))
            choice = None
            for donor in by_size:
                peer = _eligible_peer(groups[donor], now, cooldown)
                if peer is not None:
                    choice = (donor, peer)
                    break
            if choice is None:
                break
            donor, peer = choice
            reports.append(_relocate(overlay, peer, dest, now, "pull", metrics))
            if groups[donor].size <= cfg.h_soft:
                donors.remove(donor)
    return reports


# -- membership churn -----------------------------------------------------


class JoinPlacement(Enum):
    UNIFORM_GROUP = "uniform-group"
    HASHED = "hashed"

    @classmethod
    def parse(cls, text: str) -> JoinPlacement:
        for p in cls:
            if p.value == text.strip().lower():
                return p
        raise InvalidConfig(f"unknown join placement {text!r}; expected one of {[p.value for p in cls]}")


def join_target(overlay: Overlay, peer: int, placement: JoinPlacement, rng: random.Random | None) -> int:
    if placement is JoinPlacement.HASHED:
        return overlay.owner_group(peer_position(peer, overlay.salt))
    if rng is None:
        raise InvalidConfig("uniform-group placement needs an rng")
    return overlay.group_at_rank(rng.randrange(len(overlay)))


def handle_join(
    overlay: Overlay,
    peer: int,
    metrics: ReportSink | None = None,
    *,
    placement: JoinPlacement = JoinPlacement.HASHED,
    rng: random.Random | None = None,
) -> TransferReport:
    """Place a new peer, either in the group owning its hashed ring position
    or in a group drawn uniformly from ``rng``.

    The newcomer downloads the group's whole store.  Callers are expected to
    run a size check on ``report.group_id`` straight away.
    """
    gid = join_target(overlay, peer, placement, rng)
    overlay.add_member(gid, peer)
    group = overlay.groups[gid]
    group.pending_sync.add(peer)
    return emit(metrics, TransferReport(TransferKind.JOIN, group.stored_bytes, group_id=gid, peer=peer))


def handle_leave(overlay: Overlay, peer: int, metrics: ReportSink | None = None) -> TransferReport | None:
    """Remove a peer.  Data stays with the group; a group left without
    members is merged away at once (its side of the cost is zero)."""
    gid = overlay.remove_member(peer)
    group = overlay.groups[gid]
    if group.size == 0 and len(overlay) > 1:
        return merge(overlay, gid, metrics, detail="forced")
    return None


def apply_decision(
    overlay: Overlay,
    gid: int,
    decision: Decision,
    cfg: SizeConfig,
    metrics: ReportSink | None = None,
    control_msg_bytes: int = DEFAULT_CONTROL_MSG_BYTES,
) -> TransferReport | None:
    if gid not in overlay.groups:
        raise UnknownGroup(gid)
    if decision is Decision.MERGE:
        return merge(overlay, gid, metrics)
    if decision is Decision.SPLIT_SIZE:
        return split(overlay, gid, SplitCause.SIZE_LIMIT, cfg, metrics, control_msg_bytes)
    if decision is Decision.SPLIT_OVERLOAD:
        return split(overlay, gid, SplitCause.OVERLOAD, cfg, metrics, control_msg_bytes)
    return None
