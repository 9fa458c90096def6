# app/placement/table.py
# Page-granular redirection table: host page -> (device, device page).
from __future__ import annotations

import heapq
from typing import Callable, Dict, Iterable, List, Optional, Set, Tuple

from app.config import SimConfig
from app.core import Device, DeviceAddress
from app.errors import InvariantBreach, OutOfMemory, OutOfWindow, SwapPagesIdentical, UnmappedPage


class RedirectionTable:
    """
    Presents DRAM+NVM as one flat window. Host pages are mapped on first touch
    (DRAM until the watermark, then NVM) or placed explicitly by the allocator.
    Mapping is injective; free device pages are handed out lowest first.
    """

    def __init__(self, cfg: SimConfig) -> None:
        self.page_size = cfg.page_size
        self.window_base = cfg.window_base
        self.window_end = cfg.window_end
        self.host_pages = cfg.window_size // cfg.page_size
        self.device_pages = {
            Device.DRAM: cfg.dram_capacity // cfg.page_size,
            Device.NVM: cfg.nvm_capacity // cfg.page_size,
        }
        self.first_touch = cfg.policy.first_touch
        self.dram_limit = int(self.device_pages[Device.DRAM] * cfg.policy.dram_watermark)

        self.entries: Dict[int, DeviceAddress] = {}
        self._owner: Dict[Tuple[Device, int], int] = {}
        # range lists are already valid heaps
        self._free: Dict[Device, List[int]] = {d: list(range(n)) for d, n in self.device_pages.items()}
        self._resident: Dict[Device, Set[int]] = {Device.DRAM: set(), Device.NVM: set()}
        self._reserved: Set[Tuple[Device, int]] = set()
        # returns True after handing a reserved frame back (aborts an in-flight move)
        self.reclaim: Optional[Callable[[], bool]] = None

    # -------------------- Address helpers --------------------

    def page_of(self, addr: int) -> int:
        if not (self.window_base <= addr < self.window_end):
            raise OutOfWindow(f"address {addr:#x} outside window [{self.window_base:#x}, {self.window_end:#x})")
        return (addr - self.window_base) // self.page_size

    def page_addr(self, page: int) -> int:
        return self.window_base + page * self.page_size

    def location(self, page: int) -> Optional[DeviceAddress]:
        """Device page (offset page-aligned) currently backing a host page."""
        return self.entries.get(page)

    def device_of(self, page: int) -> Optional[Device]:
        loc = self.entries.get(page)
        return loc.device if loc is not None else None

    def owner(self, device: Device, dpage: int) -> Optional[int]:
        return self._owner.get((device, dpage))

    def free_count(self, device: Device) -> int:
        return len(self._free[device])

    def used(self, device: Device) -> int:
        return self.device_pages[device] - len(self._free[device])

    def resident(self, device: Device) -> Set[int]:
        return self._resident[device]

    @property
    def mapped_pages(self) -> int:
        return len(self.entries)

    # -------------------- Lookup / mapping --------------------

    def lookup(self, addr: int) -> DeviceAddress:
        """Translate a host address, preserving the offset within the page."""
        page = self.page_of(addr)
        loc = self.entries.get(page)
        if loc is None:
            if not self.first_touch:
                raise UnmappedPage(f"host page {page} is not mapped")
            loc = self.touch(page)
        return DeviceAddress(loc.device, loc.offset + (addr - self.window_base) % self.page_size)

    def touch(self, page: int) -> DeviceAddress:
        """First-touch placement: DRAM below the watermark, else NVM, else whatever is free."""
        loc = self.entries.get(page)
        if loc is not None:
            return loc
        if self.used(Device.DRAM) < self.dram_limit and self._free[Device.DRAM]:
            dev = Device.DRAM
        elif self._free[Device.NVM]:
            dev = Device.NVM
        elif self._free[Device.DRAM]:
            dev = Device.DRAM
        elif self.reclaim is not None and self.reclaim():
            return self.touch(page)
        else:
            raise OutOfMemory("no free device page left for first touch")
        return self._map(page, dev, heapq.heappop(self._free[dev]))

    def place(self, page: int, device: Device) -> DeviceAddress:
        """Explicit placement (allocator hints). Falls back to the other device when full."""
        loc = self.entries.get(page)
        if loc is not None:
            return loc
        if not (0 <= page < self.host_pages):
            raise OutOfWindow(f"host page {page} outside window")
        dev = device if self._free[device] else device.other
        if not self._free[dev]:
            raise OutOfMemory("no free device page left")
        return self._map(page, dev, heapq.heappop(self._free[dev]))

    def _map(self, page: int, dev: Device, dpage: int) -> DeviceAddress:
        loc = DeviceAddress(dev, dpage * self.page_size)
        self.entries[page] = loc
        self._owner[(dev, dpage)] = page
        self._resident[dev].add(page)
        return loc

    # -------------------- Free frames for promotion --------------------

    def reserve(self, device: Device) -> int:
        """Take the lowest free device page out of circulation for a DMA move."""
        if not self._free[device]:
            raise OutOfMemory(f"no free {device.value} page to reserve")
        dpage = heapq.heappop(self._free[device])
        self._reserved.add((device, dpage))
        return dpage

    def unreserve(self, device: Device, dpage: int) -> None:
        if (device, dpage) not in self._reserved:
            raise InvariantBreach(f"{device.value} page {dpage} was not reserved")
        self._reserved.discard((device, dpage))
        heapq.heappush(self._free[device], dpage)

    # -------------------- Commits (called by the DMA engine) --------------------

    def commit_swap(self, page_a: int, page_b: int) -> None:
        if page_a == page_b:
            raise SwapPagesIdentical(f"cannot swap host page {page_a} with itself")
        la, lb = self.entries.get(page_a), self.entries.get(page_b)
        if la is None or lb is None:
            raise InvariantBreach(f"swap of unmapped page(s) {page_a}, {page_b}")
        ps = self.page_size
        self.entries[page_a], self.entries[page_b] = lb, la
        self._owner[(lb.device, lb.offset // ps)] = page_a
        self._owner[(la.device, la.offset // ps)] = page_b
        if la.device is not lb.device:
            self._resident[la.device].discard(page_a)
            self._resident[lb.device].discard(page_b)
            self._resident[lb.device].add(page_a)
            self._resident[la.device].add(page_b)

    def commit_move(self, page: int, device: Device, dpage: int) -> DeviceAddress:
        """Point `page` at a reserved frame; its old frame goes back to the free pool."""
        if (device, dpage) not in self._reserved:
            raise InvariantBreach(f"{device.value} page {dpage} was not reserved")
        old = self.entries.get(page)
        if old is None:
            raise InvariantBreach(f"move of unmapped page {page}")
        self._reserved.discard((device, dpage))
        old_dpage = old.offset // self.page_size
        del self._owner[(old.device, old_dpage)]
        self._resident[old.device].discard(page)
        heapq.heappush(self._free[old.device], old_dpage)
        return self._map(page, device, dpage)

    # -------------------- Checks --------------------

    def check(self) -> None:
        """Injectivity and pool accounting; raises InvariantBreach."""
        seen = set()
        ps = self.page_size
        for page, loc in self.entries.items():
            key = (loc.device, loc.offset // ps)
            if key in seen:
                raise InvariantBreach(f"device page {key} mapped twice")
            seen.add(key)
            if self._owner.get(key) != page:
                raise InvariantBreach(f"reverse map out of sync for host page {page}")
        for dev, n in self.device_pages.items():
            used = sum(1 for d, _ in seen if d is dev) + sum(1 for d, _ in self._reserved if d is dev)
            if used + len(self._free[dev]) != n:
                raise InvariantBreach(f"{dev.value} frame accounting broken")

    def mapped(self) -> Iterable[Tuple[int, DeviceAddress]]:
        return sorted(self.entries.items())
