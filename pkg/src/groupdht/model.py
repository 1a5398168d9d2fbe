"""Peers, keys, groups and the ring overlay that ties them together.

The key space is a 64-bit circle.  A group owns the half-open arc
``[range_start, range_end)``; the end of one group's arc is always the start
of its successor's, so the arcs tile the ring exactly.  A lone group owns the
whole ring and is represented with ``range_start == range_end``.
"""
from __future__ import annotations

import bisect
import hashlib
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator

from .errors import DuplicatePeer, InvalidConfig, UnknownGroup, UnknownPeer

RING_BITS = 64
RING_SIZE = 1 << RING_BITS
RING_MASK = RING_SIZE - 1


def ring_offset(start: int, key: int) -> int:
    """Clockwise distance from ``start`` to ``key``."""
    return (key - start) & RING_MASK


def peer_position(peer_id: int, salt: int = 0) -> int:
    """Stable ring position a peer hashes to when it joins."""
    raw = (peer_id & RING_MASK).to_bytes(8, "big") + (salt & RING_MASK).to_bytes(8, "big")
    return int.from_bytes(hashlib.blake2b(raw, digest_size=8).digest(), "big")


@dataclass(frozen=True)
class DataObject:
    key: int
    object_id: int
    size_bytes: int

    def __post_init__(self) -> None:
        if self.size_bytes < 1:
            raise InvalidConfig(f"object {self.object_id} has size {self.size_bytes} < 1")
        if not 0 <= self.key < RING_SIZE:
            raise InvalidConfig(f"key {self.key} outside the 64-bit ring")


@dataclass(frozen=True)
class SizeConfig:
    """Hard limits ``l``/``h`` and soft limits ``l_soft``/``h_soft``."""

    l: int
    l_soft: int
    h_soft: int
    h: int

    def __post_init__(self) -> None:
        if min(self.l, self.l_soft, self.h_soft, self.h) < 1:
            raise InvalidConfig(f"size limits must be >= 1: {self}")
        if not self.l <= self.l_soft <= self.h_soft <= self.h:
            raise InvalidConfig(f"size limits out of order: {self}")
        if self.l_soft - self.l != self.h - self.h_soft:
            raise InvalidConfig(f"soft band is not symmetric: {self}")

    @property
    def delta(self) -> int:
        return self.l_soft - self.l

    @classmethod
    def from_delta(cls, l: int, h: int, delta: int) -> SizeConfig:
        return cls(l, l + delta, h - delta, h)


def validate_size_config(l: int, l_soft: int, h_soft: int, h: int) -> SizeConfig:
    return SizeConfig(l, l_soft, h_soft, h)


class Mode(Enum):
    NPPR = "NPPR"
    PUSH = "Push"
    PULL = "Pull"
    FPPR = "FPPR"

    @property
    def push(self) -> bool:
        return self in (Mode.PUSH, Mode.FPPR)

    @property
    def pull(self) -> bool:
        return self in (Mode.PULL, Mode.FPPR)

    @classmethod
    def parse(cls, text: str) -> Mode:
        for mode in cls:
            if mode.value.lower() == text.strip().lower():
                return mode
        raise InvalidConfig(f"unknown mode {text!r}; expected one of {[m.value for m in cls]}")


@dataclass(frozen=True)
class TimerConfig:
    maintenance_period_s: float = 1.0
    maintenance_probability: float = 0.10
    size_check_min_s: float = 2.0
    size_check_max_s: float = 4.0
    relocation_check_period_s: float = 20.0
    relocation_cooldown_s: float = 20.0
    load_threshold: float = 1.75

    def __post_init__(self) -> None:
        periods = (
            self.maintenance_period_s,
            self.size_check_min_s,
            self.relocation_check_period_s,
        )
        if min(periods) <= 0 or self.relocation_cooldown_s < 0:
            raise InvalidConfig(f"timer periods must be positive: {self}")
        if self.size_check_max_s < self.size_check_min_s:
            raise InvalidConfig("size_check_max_s < size_check_min_s")
        if not 0.0 <= self.maintenance_probability <= 1.0:
            raise InvalidConfig("maintenance_probability must lie in [0, 1]")
        if self.load_threshold <= 1.0:
            raise InvalidConfig("load_threshold must exceed 1")


@dataclass(eq=False)
class Group:
    group_id: int
    range_start: int
    range_end: int
    members: set[int] = field(default_factory=set)
    store: list[DataObject] = field(default_factory=list)
    hot: bool = False
    last_relocation_at: dict[int, float] = field(default_factory=dict)
    # members that still owe an object-digest reconciliation (see maintenance)
    pending_sync: set[int] = field(default_factory=set)
    stored_bytes: int = 0

    def __post_init__(self) -> None:
        self.stored_bytes = sum(o.size_bytes for o in self.store)

    @property
    def size(self) -> int:
        return len(self.members)

    @property
    def width(self) -> int:
        return ring_offset(self.range_start, self.range_end) or RING_SIZE

    def contains(self, key: int) -> bool:
        return ring_offset(self.range_start, key) < self.width

    def add_objects(self, objects: Iterable[DataObject]) -> None:
        for obj in objects:
            self.store.append(obj)
            self.stored_bytes += obj.size_bytes

    def sorted_store(self) -> list[DataObject]:
        """Objects in clockwise key order from ``range_start``."""
        start = self.range_start
        return sorted(self.store, key=lambda o: (ring_offset(start, o.key), o.object_id))


class Overlay:
    """Ring of groups plus the global peer registry."""

    def __init__(self, salt: int = 0) -> None:
        self.salt = salt
        self.groups: dict[int, Group] = {}
        self.peer_index: dict[int, int] = {}
        self._starts: list[int] = []
        self._by_start: dict[int, int] = {}
        self._next_group_id = 0
        self._next_peer_id = 0
        self._seen_peers: set[int] = set()
        self.total_bytes = 0
        self.total_objects = 0

    @classmethod
    def single(cls, store: Iterable[DataObject] = (), salt: int = 0) -> Overlay:
        overlay = cls(salt=salt)
        group = Group(overlay.new_group_id(), 0, 0)
        group.add_objects(store)
        overlay.insert_group(group)
        return overlay

    # -- identifiers -----------------------------------------------------

    def new_group_id(self) -> int:
        gid = self._next_group_id
        self._next_group_id += 1
        return gid

    def new_peer_id(self) -> int:
        while self._next_peer_id in self._seen_peers:
            self._next_peer_id += 1
        pid = self._next_peer_id
        self._next_peer_id += 1
        return pid

    # -- ring structure --------------------------------------------------

    def __len__(self) -> int:
        return len(self.groups)

    def group(self, gid: int) -> Group:
        try:
            return self.groups[gid]
        except KeyError:
            raise UnknownGroup(gid) from None

    def insert_group(self, group: Group) -> None:
        if group.range_start in self._by_start:
            raise InvalidConfig(f"two groups would start at {group.range_start}")
        self.groups[group.group_id] = group
        bisect.insort(self._starts, group.range_start)
        self._by_start[group.range_start] = group.group_id
        self.total_bytes += group.stored_bytes
        self.total_objects += len(group.store)
        for peer in group.members:
            self.peer_index[peer] = group.group_id

    def remove_group(self, gid: int) -> Group:
        group = self.group(gid)
        del self.groups[gid]
        idx = bisect.bisect_left(self._starts, group.range_start)
        del self._starts[idx]
        del self._by_start[group.range_start]
        self.total_bytes -= group.stored_bytes
        self.total_objects -= len(group.store)
        for peer in group.members:
            if self.peer_index.get(peer) == gid:
                del self.peer_index[peer]
        return group

    def move_start(self, group: Group, new_start: int) -> None:
        idx = bisect.bisect_left(self._starts, group.range_start)
        del self._starts[idx]
        del self._by_start[group.range_start]
        group.range_start = new_start
        bisect.insort(self._starts, new_start)
        self._by_start[new_start] = group.group_id

    def owner_group(self, key: int) -> int:
        """Group whose arc contains ``key``."""
        idx = bisect.bisect_right(self._starts, key & RING_MASK) - 1
        # idx == -1 falls through to the last group, whose arc wraps past zero
        return self._by_start[self._starts[idx]]

    def group_at_rank(self, rank: int) -> int:
        """Id of the ``rank``-th group clockwise from key 0."""
        return self._by_start[self._starts[rank]]

    def ring_neighbors(self, gid: int) -> tuple[int, int]:
        group = self.group(gid)
        n = len(self._starts)
        idx = bisect.bisect_left(self._starts, group.range_start)
        pred = self._by_start[self._starts[idx - 1]]
        succ = self._by_start[self._starts[(idx + 1) % n]]
        return pred, succ

    def ring_order(self) -> Iterator[Group]:
        for start in self._starts:
            yield self.groups[self._by_start[start]]

    # -- aggregates ------------------------------------------------------

    @property
    def live_peers(self) -> int:
        return len(self.peer_index)

    @property
    def mean_stored_bytes(self) -> float:
        return self.total_bytes / len(self.groups)

    def iter_objects(self) -> Iterator[DataObject]:
        for group in self.groups.values():
            yield from group.store

    def store_digest(self) -> str:
        """Hash of the sorted ``(object_id, size, key)`` multiset across all stores."""
        h = hashlib.sha256()
        for oid, size, key in sorted((o.object_id, o.size_bytes, o.key) for o in self.iter_objects()):
            h.update(f"{oid}:{size}:{key};".encode())
        return h.hexdigest()

    # -- membership ------------------------------------------------------

    def add_member(self, gid: int, peer: int) -> None:
        if peer in self.peer_index or peer in self._seen_peers:
            raise DuplicatePeer(peer)
        self.group(gid).members.add(peer)
        self.peer_index[peer] = gid
        self._seen_peers.add(peer)

    def remove_member(self, peer: int) -> int:
        try:
            gid = self.peer_index.pop(peer)
        except KeyError:
            raise UnknownPeer(peer) from None
        group = self.groups[gid]
        group.members.discard(peer)
        group.last_relocation_at.pop(peer, None)
        group.pending_sync.discard(peer)
        return gid

    def transfer_member(self, peer: int, dest: int) -> int:
        """Move a live peer to another group, carrying its relocation stamp."""
        src = self.peer_index.get(peer)
        if src is None:
            raise UnknownPeer(peer)
        source, target = self.groups[src], self.group(dest)
        source.members.discard(peer)
        source.pending_sync.discard(peer)
        stamp = source.last_relocation_at.pop(peer, None)
        target.members.add(peer)
        if stamp is not None:
            target.last_relocation_at[peer] = stamp
        self.peer_index[peer] = dest
        return src

    # -- consistency -----------------------------------------------------

    def check_invariants(self) -> None:
        """Raise ``AssertionError`` if any structural invariant is broken."""
        groups = list(self.ring_order())
        assert groups, "overlay has no groups"
        assert len(groups) == len(self.groups) == len(self._by_start)
        widths = 0
        for i, g in enumerate(groups):
            succ = groups[(i + 1) % len(groups)]
            assert g.range_end == succ.range_start, f"gap/overlap after group {g.group_id}"
            widths += g.width
            for obj in g.store:
                assert g.contains(obj.key), f"object {obj.object_id} outside group {g.group_id}"
            assert g.stored_bytes == sum(o.size_bytes for o in g.store)
            assert set(g.last_relocation_at) <= g.members
        assert widths == RING_SIZE, "arcs do not tile the ring"
        seen: set[int] = set()
        for g in groups:
            assert not (g.members & seen), "peer in two groups"
            seen |= g.members
            for peer in g.members:
                assert self.peer_index[peer] == g.group_id
        assert len(seen) == len(self.peer_index)
        assert self.total_bytes == sum(g.stored_bytes for g in groups)
        assert self.total_objects == sum(len(g.store) for g in groups)
