"""Random interleavings of joins, leaves, size checks and relocation rounds
against a live overlay, checking the structural invariants after every step."""
from __future__ import annotations

import random

from hypothesis import settings
from hypothesis import strategies as st
from hypothesis.stateful import RuleBasedStateMachine, initialize, invariant, precondition, rule

from groupdht.model import DataObject, Mode, Overlay, SizeConfig, TimerConfig
from groupdht.topology import (
    Decision,
    JoinPlacement,
    TransferKind,
    apply_decision,
    handle_join,
    handle_leave,
    relocation_round,
    size_check,
)

TIMERS = TimerConfig()


class OverlayMachine(RuleBasedStateMachine):
    @initialize(
        n_objects=st.integers(0, 40),
        seed=st.integers(0, 2**32),
        h=st.sampled_from([8, 11, 16]),
        delta=st.integers(0, 3),
    )
    def setup(self, n_objects, seed, h, delta):
        rng = random.Random(seed)
        n_keys = max(1, n_objects // 2)
        keys = [rng.getrandbits(64) for _ in range(n_keys)]
        data = [DataObject(rng.choice(keys), i, rng.randint(1, 10**6)) for i in range(n_objects)]
        self.cfg = SizeConfig.from_delta(4, h, min(delta, (h - 4) // 2))
        self.overlay = Overlay.single(data, salt=seed)
        self.digest = self.overlay.store_digest()
        self.rng = rng
        self.now = 0.0
        self.relocated_at: dict[int, float] = {}
        for _ in range(4):
            handle_join(self.overlay, self.overlay.new_peer_id())

    @rule(uniform=st.booleans(), count=st.integers(1, 12))
    def join(self, uniform, count):
        placement = JoinPlacement.UNIFORM_GROUP if uniform else JoinPlacement.HASHED
        for _ in range(count):
            peer = self.overlay.new_peer_id()
            report = handle_join(self.overlay, peer, placement=placement, rng=self.rng)
            assert self.overlay.peer_index[peer] == report.group_id
            assert report.bytes == self.overlay.groups[report.group_id].stored_bytes

    @precondition(lambda self: self.overlay.live_peers > 1)
    @rule(pick=st.integers(0, 10**6))
    def leave(self, pick):
        peers = sorted(self.overlay.peer_index)
        peer = peers[pick % len(peers)]
        groups_before = len(self.overlay)
        report = handle_leave(self.overlay, peer)
        assert peer not in self.overlay.peer_index
        self.relocated_at.pop(peer, None)
        if report is not None:
            assert report.kind is TransferKind.MERGE and report.detail == "forced"
            assert len(self.overlay) == groups_before - 1

    @rule(pick=st.integers(0, 10**6))
    def check_group(self, pick):
        ids = sorted(self.overlay.groups)
        gid = ids[pick % len(ids)]
        decision = size_check(self.overlay, gid, self.cfg, TIMERS)
        parent = self.overlay.groups[gid].size
        report = apply_decision(self.overlay, gid, decision, self.cfg)
        if decision in (Decision.SPLIT_SIZE, Decision.SPLIT_OVERLOAD):
            left = self.overlay.groups[report.group_id].size
            right = self.overlay.groups[report.other_group].size
            assert left + right == parent
            assert abs(left - right) <= 1
            if parent % 2 == 0:
                assert left == right
            assert min(left, right) >= self.cfg.l

    @rule(mode=st.sampled_from(list(Mode)), step=st.sampled_from([1.0, 5.0, 20.0, 25.0]))
    def relocate(self, mode, step):
        self.now += step
        before = {p: g for p, g in self.overlay.peer_index.items()}
        reports = relocation_round(self.overlay, mode, self.cfg, TIMERS, self.now)
        if mode is Mode.NPPR or self.cfg.delta == 0:
            assert reports == []
        allowed = {d for d, on in (("push", mode.push), ("pull", mode.pull)) if on}
        moved = set()
        for r in reports:
            assert r.kind is TransferKind.RELOCATION
            assert r.detail in allowed
            assert r.peer not in moved, "peer relocated twice in one round"
            moved.add(r.peer)
            assert before[r.peer] == r.other_group
            last = self.relocated_at.get(r.peer)
            assert last is None or self.now - last >= TIMERS.relocation_cooldown_s
            self.relocated_at[r.peer] = self.now
        for r in reports:
            # a relocated peer downloads the store of the group it lands in
            assert r.bytes == self.overlay.groups[r.group_id].stored_bytes
            assert self.overlay.peer_index[r.peer] == r.group_id

    @invariant()
    def structure_holds(self):
        self.overlay.check_invariants()

    @invariant()
    def data_conserved(self):
        assert self.overlay.store_digest() == self.digest

    @invariant()
    def peer_registry_consistent(self):
        members = [p for g in self.overlay.groups.values() for p in g.members]
        assert len(members) == len(set(members)) == self.overlay.live_peers
        assert all(self.overlay.peer_index[p] == g.group_id for g in self.overlay.groups.values() for p in g.members)


OverlayMachine.TestCase.settings = settings(max_examples=60, stateful_step_count=60, deadline=None)
TestOverlayMachine = OverlayMachine.TestCase
