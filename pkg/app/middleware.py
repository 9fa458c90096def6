# app/middleware.py
# Frame pool over the hybrid window plus the hint-aware allocation front end.
# Host pages [0, dram_pages) form the DRAM region, the rest the NVM region.
from __future__ import annotations

import bisect
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict

from app.config import SimConfig
from app.core import Device
from app.errors import InvariantBreach, OutOfMemory, UnknownAllocation
from app.placement.table import RedirectionTable

log = logging.getLogger("middleware")

Extent = Tuple[int, int]  # [start, end) in host pages


class AllocationHint(str, Enum):
    NO_PREFERENCE = "none"
    PREFER_DRAM = "dram"
    PREFER_NVM = "nvm"

    @property
    def device(self) -> Optional[Device]:
        if self is AllocationHint.PREFER_DRAM:
            return Device.DRAM
        if self is AllocationHint.PREFER_NVM:
            return Device.NVM
        return None


@dataclass
class Allocation:
    id: int
    name: str
    hint: AllocationHint
    size: int
    extents: List[Extent]
    frames: Dict[Device, int] = field(default_factory=dict)
    spilled: int = 0

    @property
    def pages(self) -> int:
        return sum(e - s for s, e in self.extents)

    def host_pages(self):
        for s, e in self.extents:
            yield from range(s, e)


class _FreeList:
    """Sorted, coalesced free extents of one region."""

    def __init__(self, start: int, end: int) -> None:
        self.extents: List[Extent] = [(start, end)] if end > start else []
        self.free = end - start

    def fits(self, n: int) -> bool:
        return any(e - s >= n for s, e in self.extents)

    def take(self, n: int) -> List[Extent]:
        """First fit for n contiguous frames, else the lowest n frames."""
        for i, (s, e) in enumerate(self.extents):
            if e - s >= n:
                if e - s == n:
                    del self.extents[i]
                else:
                    self.extents[i] = (s + n, e)
                self.free -= n
                return [(s, s + n)]
        out: List[Extent] = []
        need = n
        while need:
            s, e = self.extents[0]
            k = min(need, e - s)
            out.append((s, s + k))
            if k == e - s:
                self.extents.pop(0)
            else:
                self.extents[0] = (s + k, e)
            need -= k
        self.free -= n
        return out

    def give(self, ext: Extent) -> None:
        s, e = ext
        exts = self.extents
        i = bisect.bisect_left(exts, ext)
        if i > 0 and exts[i - 1][1] == s:
            i -= 1
            s = exts[i][0]
            del exts[i]
        if i < len(exts) and exts[i][0] == e:
            e = exts[i][1]
            del exts[i]
        exts.insert(i, (s, e))
        self.free += ext[1] - ext[0]


class FramePool:
    def __init__(self, cfg: SimConfig) -> None:
        self.page_size = cfg.page_size
        self.window_base = cfg.window_base
        dram_pages = cfg.dram_capacity // cfg.page_size
        self.total_pages = cfg.window_size // cfg.page_size
        self.regions: Dict[Device, _FreeList] = {
            Device.DRAM: _FreeList(0, dram_pages),
            Device.NVM: _FreeList(dram_pages, self.total_pages),
        }
        self._dram_end = dram_pages
        self.allocations: Dict[int, Allocation] = {}
        self._next_id = 0
        self.spills = 0

    def region_of(self, page: int) -> Device:
        return Device.DRAM if page < self._dram_end else Device.NVM

    @property
    def free_pages(self) -> int:
        return sum(r.free for r in self.regions.values())

    @property
    def allocated_pages(self) -> int:
        return sum(a.pages for a in self.allocations.values())

    # -------------------- alloc / free --------------------

    def alloc(self, size: int, hint: AllocationHint = AllocationHint.NO_PREFERENCE, name: str = "") -> Allocation:
        if size <= 0:
            raise ValueError("allocation size must be > 0")
        n = -(-size // self.page_size)
        if n > self.free_pages:
            raise OutOfMemory(f"cannot allocate {n} pages, {self.free_pages} free")

        pref = hint.device
        if pref is None:
            extents = self._take_lowest(n)
            spilled = 0
        else:
            first = self.regions[pref]
            k = min(n, first.free)
            extents = first.take(k) if k else []
            spilled = n - k
            if spilled:
                extents += self.regions[pref.other].take(spilled)
                self.spills += spilled
                log.warning("allocation %r spilled %d of %d pages out of %s", name or self._next_id,
                            spilled, n, pref.value)

        frames = {Device.DRAM: 0, Device.NVM: 0}
        for s, e in extents:
            frames[self.region_of(s)] += e - s
        a = Allocation(id=self._next_id, name=name, hint=hint, size=size,
                       extents=sorted(extents), frames=frames, spilled=spilled)
        self.allocations[a.id] = a
        self._next_id += 1
        return a

    def _take_lowest(self, n: int) -> List[Extent]:
        dram = self.regions[Device.DRAM]
        nvm = self.regions[Device.NVM]
        if dram.fits(n):
            return dram.take(n)
        if nvm.fits(n):
            return nvm.take(n)
        k = min(n, dram.free)
        out = dram.take(k) if k else []
        return out + (nvm.take(n - k) if n > k else [])

    def free(self, alloc_id: int) -> int:
        a = self.allocations.pop(alloc_id, None)
        if a is None:
            raise UnknownAllocation(f"allocation {alloc_id} is not live")
        for ext in a.extents:
            self.regions[self.region_of(ext[0])].give(ext)
        return a.pages

    # -------------------- helpers --------------------

    def ranges(self, a: Allocation) -> List[Tuple[int, int]]:
        """Host address ranges [start, end) of an allocation."""
        ps = self.page_size
        return [(self.window_base + s * ps, self.window_base + e * ps) for s, e in a.extents]

    def addr(self, a: Allocation, offset: int) -> int:
        """Host address of byte `offset` inside an allocation."""
        page, off = divmod(offset, self.page_size)
        for s, e in a.extents:
            if page < e - s:
                return self.window_base + (s + page) * self.page_size + off
            page -= e - s
        raise IndexError(f"offset {offset} outside allocation {a.id}")

    def check(self) -> None:
        seen = 0
        for r in self.regions.values():
            seen += r.free
        if seen + self.allocated_pages != self.total_pages:
            raise InvariantBreach("frame pool lost or duplicated frames")

    def summary(self) -> "AllocatorSummary":
        return AllocatorSummary(
            allocations=len(self.allocations),
            dram_pages=sum(a.frames[Device.DRAM] for a in self.allocations.values()),
            nvm_pages=sum(a.frames[Device.NVM] for a in self.allocations.values()),
            spilled_pages=self.spills,
            free_pages=self.free_pages,
        )


def seed(table: RedirectionTable, pool: FramePool, a: Allocation) -> int:
    """
    Place the frames of a hinted allocation in the redirection table on their
    region's device. Unhinted allocations are left to first touch.
    Returns the number of pages placed.
    """
    if a.hint is AllocationHint.NO_PREFERENCE:
        return 0
    n = 0
    for page in a.host_pages():
        table.place(page, pool.region_of(page))
        n += 1
    return n


class AllocatorSummary(BaseModel):
    model_config = ConfigDict(frozen=True)

    allocations: int
    dram_pages: int
    nvm_pages: int
    spilled_pages: int
    free_pages: int
