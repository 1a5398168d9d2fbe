"""Dataset generation, overlay bootstrap, churn plans and churn victims."""
from __future__ import annotations

import math
import random
from dataclasses import dataclass
from enum import Enum

from .errors import InsufficientPeers, InvalidConfig, NotEnoughPeers
from .model import RING_BITS, DataObject, Overlay, SizeConfig, TimerConfig
from .topology import (
    DEFAULT_CONTROL_MSG_BYTES,
    Decision,
    JoinPlacement,
    apply_decision,
    handle_join,
    size_check,
)

MB = 1_000_000


@dataclass(frozen=True)
class DataConfig:
    n_keys: int = 10_000
    n_values: int = 50_000
    value_mean_bytes: float = 5 * MB
    value_std_bytes: float = 1 * MB
    min_value_bytes: int = 1_000

    def __post_init__(self) -> None:
        if not self.n_values >= self.n_keys >= 1:
            raise InvalidConfig("need n_values >= n_keys >= 1")
        if not self.value_mean_bytes > self.value_std_bytes >= 0:
            raise InvalidConfig("need value_mean_bytes > value_std_bytes >= 0")
        if self.min_value_bytes < 1:
            raise InvalidConfig("min_value_bytes must be >= 1")

    def scaled(self, factor: float) -> DataConfig:
        return DataConfig(
            n_keys=max(1, round(self.n_keys * factor)),
            n_values=max(1, round(self.n_values * factor)),
            value_mean_bytes=self.value_mean_bytes * factor,
            value_std_bytes=self.value_std_bytes * factor,
            min_value_bytes=max(1, round(self.min_value_bytes * factor)),
        )


class Scenario(Enum):
    EXIT_ONLY = "ExitOnly"
    ENTER_EXIT = "EnterExit"

    @classmethod
    def parse(cls, text: str) -> Scenario:
        norm = text.strip().lower().replace("-", "").replace("_", "")
        for sc in cls:
            if sc.value.lower() == norm:
                return sc
        raise InvalidConfig(f"unknown scenario {text!r}; expected ExitOnly or EnterExit")


@dataclass(frozen=True)
class ChurnConfig:
    scenario: Scenario
    c: int
    churn_cycles: int = 60
    hot_ratio: float = 0.5
    epsilon: float = 0.8

    def __post_init__(self) -> None:
        if self.c < 1:
            raise InvalidConfig("c must be >= 1")
        if self.churn_cycles < 1:
            raise InvalidConfig("churn_cycles must be >= 1")
        if not 0.0 <= self.hot_ratio <= 1.0 or not 0.0 <= self.epsilon <= 1.0:
            raise InvalidConfig("hot_ratio and epsilon must lie in [0, 1]")


@dataclass(frozen=True)
class ChurnMoment:
    cycle: int
    removals: int
    additions: int


@dataclass(frozen=True)
class ChurnPlan:
    moments: tuple[ChurnMoment, ...]

    @property
    def total_removals(self) -> int:
        return sum(m.removals for m in self.moments)

    @property
    def total_additions(self) -> int:
        return sum(m.additions for m in self.moments)


def generate_dataset(cfg: DataConfig, rng: random.Random) -> list[DataObject]:
    """``n_keys`` distinct uniform keys; each value picks a key uniformly and
    draws a normal size, redrawn while below ``min_value_bytes``."""
    keys: list[int] = []
    seen: set[int] = set()
    while len(keys) < cfg.n_keys:
        key = rng.getrandbits(RING_BITS)
        if key not in seen:
            seen.add(key)
            keys.append(key)
    objects = []
    for oid in range(cfg.n_values):
        key = keys[rng.randrange(cfg.n_keys)]
        size = rng.gauss(cfg.value_mean_bytes, cfg.value_std_bytes)
        while size < cfg.min_value_bytes:
            size = rng.gauss(cfg.value_mean_bytes, cfg.value_std_bytes)
        objects.append(DataObject(key, oid, int(round(size))))
    return objects


def settle(
    overlay: Overlay,
    gid: int,
    cfg: SizeConfig,
    timers: TimerConfig,
    control_msg_bytes: int = DEFAULT_CONTROL_MSG_BYTES,
) -> None:
    """Apply size-check decisions to ``gid`` and its offspring until none apply."""
    work = [gid]
    while work:
        g = work.pop()
        if g not in overlay.groups:
            continue
        decision = size_check(overlay, g, cfg, timers)
        if decision is Decision.NONE:
            continue
        report = apply_decision(overlay, g, decision, cfg, None, control_msg_bytes)
        if report is not None and decision is not Decision.MERGE:
            work.extend((report.group_id, report.other_group))
        elif report is not None:
            work.append(report.group_id)


def bootstrap_overlay(
    n_peers: int,
    size_cfg: SizeConfig,
    dataset: list[DataObject],
    rng: random.Random,
    timers: TimerConfig = TimerConfig(),
    control_msg_bytes: int = DEFAULT_CONTROL_MSG_BYTES,
    placement: JoinPlacement = JoinPlacement.UNIFORM_GROUP,
) -> Overlay:
    """Grow an overlay from one group holding the whole dataset by joining
    peers one at a time, resolving each join's size check before the next.
    ``rng`` provides the ring salt and, for uniform placement, each join's
    group."""
    if n_peers < size_cfg.l:
        raise InsufficientPeers(f"{n_peers} peers cannot fill a group of {size_cfg.l}")
    overlay = Overlay.single(dataset, salt=rng.getrandbits(64))
    for _ in range(n_peers):
        report = handle_join(overlay, overlay.new_peer_id(), placement=placement, rng=rng)
        settle(overlay, report.group_id, size_cfg, timers, control_msg_bytes)
    return overlay


def build_churn_plan(cfg: ChurnConfig) -> ChurnPlan:
    additions = cfg.c if cfg.scenario is Scenario.ENTER_EXIT else 0
    return ChurnPlan(
        tuple(ChurnMoment(cycle, cfg.c, additions) for cycle in range(0, cfg.churn_cycles, 2))
    )


def assign_heat(overlay: Overlay, hot_ratio: float, rng: random.Random) -> set[int]:
    gids = sorted(overlay.groups)
    hot = set(rng.sample(gids, math.floor(hot_ratio * len(gids))))
    for gid, group in overlay.groups.items():
        group.hot = gid in hot
    return hot


def pick_victims(overlay: Overlay, k: int, epsilon: float, rng: random.Random) -> list[int]:
    """``k`` distinct live peers.  Each draw takes the hot side with
    probability ``epsilon`` (falling back to the other side when empty) and a
    uniform peer within that side."""
    if not overlay.groups:
        raise NotEnoughPeers("overlay has no groups")
    hot: list[int] = []
    cold: list[int] = []
    for group in overlay.ring_order():
        (hot if group.hot else cold).extend(sorted(group.members))
    if k > len(hot) + len(cold):
        raise NotEnoughPeers(f"asked for {k} victims, only {len(hot) + len(cold)} live peers")
    victims = []
    for _ in range(k):
        side, other = (hot, cold) if rng.random() < epsilon else (cold, hot)
        if not side:
            side = other
        i = rng.randrange(len(side))
        side[i], side[-1] = side[-1], side[i]
        victims.append(side.pop())
    return victims
