from __future__ import annotations

import copy
import math
import random

import pytest

from groupdht.engine import rng_substream
from groupdht.errors import InvalidConfig
from groupdht.harness import ExperimentCell, RunSettings, run_single
from groupdht.maintenance import (
    GROUP_LABEL,
    RING_LABEL,
    MaintenanceConfig,
    group_maintenance_bytes,
    maintenance_tick,
    stabilization_bytes,
    stabilization_tick,
)
from groupdht.model import DataObject, Group, Mode, Overlay, TimerConfig
from groupdht.workload import Scenario

DIGEST_ONLY = MaintenanceConfig(heartbeat_bytes=0, digest_entry_bytes=0)


def group_of(n: int, objects: int = 0) -> Group:
    g = Group(0, 0, 0, members=set(range(n)))
    g.add_objects(DataObject(k, k, 10) for k in range(objects))
    return g


def always() -> random.Random:
    class Fixed(random.Random):
        def random(self):
            return 0.0

    return Fixed()


def test_probability_zero_emits_nothing():
    timers = TimerConfig(maintenance_probability=0.0)
    g = group_of(6)
    rng = rng_substream(0, "maintenance")
    assert all(maintenance_tick(g, timers, MaintenanceConfig(), rng) is None for _ in range(1000))


def test_probability_zero_whole_run():
    settings = RunSettings(
        scale=0.05,
        timers=TimerConfig(maintenance_probability=0.0),
        maintenance=MaintenanceConfig(stabilization_period_s=1e9),
    )
    m = run_single(ExperimentCell(Scenario.ENTER_EXIT, 100, Mode.FPPR, "XS", 1, n_runs=1), 0, settings)
    assert m.bytes_maintenance == 0


def test_steady_state_digest_exchange():
    # with the pairwise and repair terms disabled only the digest remains
    r = maintenance_tick(group_of(6), TimerConfig(), DIGEST_ONLY, always())
    assert r.bytes == 6 * 128
    assert r.detail == GROUP_LABEL


def test_default_cost_formula():
    g = group_of(6, objects=3)
    g.pending_sync = {1, 2}
    cfg = MaintenanceConfig()
    assert group_maintenance_bytes(g, cfg) == 6 * 128 + 6 * 5 * 128 + 2 * 3 * 16


def test_repair_term_clears_after_firing():
    g = group_of(6, objects=4)
    g.pending_sync = {0}
    first = maintenance_tick(g, TimerConfig(), MaintenanceConfig(), always()).bytes
    second = maintenance_tick(g, TimerConfig(), MaintenanceConfig(), always()).bytes
    assert first - second == 4 * 16
    assert g.pending_sync == set()


def test_firing_rate_binomial():
    rng = rng_substream(5, "maintenance")
    g = group_of(4)
    fired = sum(maintenance_tick(g, TimerConfig(), MaintenanceConfig(), rng) is not None for _ in range(10_000))
    sigma = math.sqrt(10_000 * 0.1 * 0.9)
    assert abs(fired - 1000) <= 3 * sigma


def test_tick_does_not_touch_structure():
    g = group_of(6, objects=3)
    before = (set(g.members), list(g.store), g.range_start, g.range_end)
    maintenance_tick(g, TimerConfig(), MaintenanceConfig(), always())
    assert (g.members, g.store, g.range_start, g.range_end) == before


def overlay_of(sizes: list[int]) -> Overlay:
    ov = Overlay()
    step = 2**64 // len(sizes)
    pid = 0
    for i, n in enumerate(sizes):
        g = Group(ov.new_group_id(), i * step, (i + 1) * step if i < len(sizes) - 1 else 0)
        ov.insert_group(g)
        for _ in range(n):
            ov.add_member(g.group_id, pid)
            pid += 1
    return ov


def test_stabilization_neighbours_only():
    cfg = MaintenanceConfig(fingers_per_group=0, passive_view_size=0)
    ov = overlay_of([4, 6, 5])
    assert stabilization_bytes(ov, cfg) == 2 * 128 * 15


def test_stabilization_single_group():
    ov = overlay_of([6])
    r = stabilization_tick(ov, MaintenanceConfig())
    assert r.bytes == (2 + 8 + 8) * 128 * 6
    assert r.detail == RING_LABEL


def test_stabilization_invariant_to_group_size():
    small = overlay_of([6] * 100)
    big = overlay_of([12] * 50)
    a, b = stabilization_bytes(small, MaintenanceConfig()), stabilization_bytes(big, MaintenanceConfig())
    assert abs(a - b) <= 0.01 * a


def test_stabilization_does_not_mutate():
    ov = overlay_of([4, 5])
    before = copy.deepcopy([(g.group_id, g.members, g.range_start) for g in ov.ring_order()])
    stabilization_tick(ov, MaintenanceConfig())
    assert [(g.group_id, g.members, g.range_start) for g in ov.ring_order()] == before


@pytest.mark.parametrize("kwargs", [{"control_msg_bytes": -1}, {"stabilization_period_s": 0}])
def test_config_validation(kwargs):
    with pytest.raises(InvalidConfig):
        MaintenanceConfig(**kwargs)
