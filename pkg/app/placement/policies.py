# app/placement/policies.py
# Placement/migration policies. A policy sees the request, a table view and
# its hotness state, and answers with a PolicyAction; the pipeline and the DMA
# engine own every table mutation.
from __future__ import annotations

from dataclasses import dataclass
from typing import Container, Dict, Optional, Protocol, Tuple

from app.config import SimConfig
from app.core import Device, DeviceAddress, MemoryRequest
from app.placement.hotness import HotnessState, select_victim
from app.placement.table import RedirectionTable

# (hot page, victim page); victim None means "promote into a free frame"
Migrate = Tuple[int, Optional[int]]


@dataclass(frozen=True, slots=True)
class PolicyAction:
    route: DeviceAddress
    migrate: Optional[Migrate] = None


class Policy(Protocol):
    name: str

    def on_access(self, req: MemoryRequest, table: RedirectionTable,
                  hotness: HotnessState, busy: Container[int]) -> PolicyAction:
        ...

    def stats(self) -> Dict[str, int]:
        ...


class StaticPolicy:
    """Pages stay where first touch (or the allocator) put them."""
    name = "static"

    def on_access(self, req: MemoryRequest, table: RedirectionTable,
                  hotness: HotnessState, busy: Container[int]) -> PolicyAction:
        return PolicyAction(table.lookup(req.addr))

    def stats(self) -> Dict[str, int]:
        return {}


class HotnessPolicy:
    """
    Epoch-based hotness counting. An NVM page accessed more than `threshold`
    times in one epoch is promoted: into a free DRAM frame if one exists,
    otherwise by swapping with the coldest DRAM page.
    """
    name = "hotness"

    def __init__(self) -> None:
        self.triggered = 0
        self.promotions = 0
        self.swaps = 0
        self.declined = 0

    def on_access(self, req: MemoryRequest, table: RedirectionTable,
                  hotness: HotnessState, busy: Container[int]) -> PolicyAction:
        route = table.lookup(req.addr)
        page = table.page_of(req.addr)
        n = hotness.observe(page, req.arrival)
        if (route.device is not Device.NVM or n <= hotness.threshold
                or page in busy or page in hotness.declined):
            return PolicyAction(route)

        self.triggered += 1
        if table.free_count(Device.DRAM) > 0:
            self.promotions += 1
            return PolicyAction(route, (page, None))
        victim = select_victim(hotness, table, exclude=busy)
        if victim is None or hotness.count(victim) >= n:
            # nothing colder in DRAM; stop rescanning for this page until the epoch rolls
            hotness.declined.add(page)
            self.declined += 1
            return PolicyAction(route)
        self.swaps += 1
        return PolicyAction(route, (page, victim))

    def stats(self) -> Dict[str, int]:
        return {
            "triggered": self.triggered,
            "promotions": self.promotions,
            "swaps": self.swaps,
            "declined": self.declined,
        }


POLICIES = {"static": StaticPolicy, "hotness": HotnessPolicy}


def make_policy(cfg: SimConfig) -> Policy:
    return POLICIES[cfg.policy.name]()


def make_hotness(cfg: SimConfig) -> HotnessState:
    return HotnessState(epoch_cycles=cfg.policy.epoch_cycles, threshold=cfg.policy.threshold)
