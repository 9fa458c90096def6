from __future__ import annotations

from dataclasses import dataclass, field
from typing import Container, Dict, Optional, Set

from app.core import Device
from app.placement.table import RedirectionTable


@dataclass
class HotnessState:
    """Per-page access counts for the current epoch."""
    epoch_cycles: int = 100_000
    threshold: int = 32
    epoch: int = 0
    counters: Dict[int, int] = field(default_factory=dict)
    # pages that crossed the threshold but found no victim this epoch
    declined: Set[int] = field(default_factory=set)

    def roll(self, now: int) -> None:
        epoch = now // self.epoch_cycles
        if epoch != self.epoch:
            self.epoch = epoch
            self.counters.clear()
            self.declined.clear()

    def observe(self, page: int, now: int) -> int:
        self.roll(now)
        n = self.counters.get(page, 0) + 1
        self.counters[page] = n
        return n

    def count(self, page: int) -> int:
        return self.counters.get(page, 0)


def select_victim(hotness: HotnessState, table: RedirectionTable,
                  exclude: Container[int] = ()) -> Optional[int]:
    """
    Coldest DRAM-resident host page this epoch (ties: lowest page number).
    None when DRAM still has a free page, or nothing is eligible.
    """
    if table.free_count(Device.DRAM) > 0:
        return None
    counts = hotness.counters
    best = None
    for page in table.resident(Device.DRAM):
        if page in exclude:
            continue
        key = (counts.get(page, 0), page)
        if best is None or key < best:
            best = key
    return best[1] if best is not None else None
