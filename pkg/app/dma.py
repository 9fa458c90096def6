# app/dma.py
# Page-swap DMA engine: moves pages between DRAM and NVM in dma_block units,
# tracks per-block progress, and decides where a request that hits a page in
# flight must go.
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Deque, Dict, List, Optional, Tuple

from app.config import SimConfig
from app.core import Device, DeviceAddress, MemoryRequest, Op
from app.errors import OutOfMemory, SameDevice, SamePage, SimError, SwapInProgress
from app.events import EventQueue
from app.memory import DeviceMemory
from app.placement.table import RedirectionTable
from app.telemetry import CounterSet
from app.timing import DeviceModel

log = logging.getLogger("dma")


class JobState(str, Enum):
    ACTIVE = "active"
    DRAINING = "draining"   # last block in flight
    DONE = "done"
    ABORTED = "aborted"     # move cancelled so first touch could take its frame


class ConflictDecision(str, Enum):
    SOURCE = "source"
    DESTINATION = "destination"
    STALL = "stall_until_block_done"


@dataclass(eq=False)
class SwapJob:
    """
    Exchange of host pages a and b (or promotion of a into a reserved frame
    when page_b is None). Blocks below `progress` already sit at their
    destination; the rest are still at their source.
    """
    page_a: int
    page_b: Optional[int]
    src_a: DeviceAddress        # page-aligned
    src_b: DeviceAddress        # page-aligned; the reserved frame for a move
    blocks: int
    block_size: int
    page_size: int
    window_base: int
    buffer: bytearray
    progress: int = 0
    in_flight: Optional[int] = None
    state: JobState = JobState.ACTIVE
    started: int = 0
    auto: bool = True
    parked: List[MemoryRequest] = field(default_factory=list)

    @property
    def is_move(self) -> bool:
        return self.page_b is None

    def pages(self) -> Tuple[int, ...]:
        return (self.page_a,) if self.page_b is None else (self.page_a, self.page_b)

    def source_of(self, page: int) -> DeviceAddress:
        return self.src_a if page == self.page_a else self.src_b

    def destination_of(self, page: int) -> DeviceAddress:
        return self.src_b if page == self.page_a else self.src_a

    def block_of(self, addr: int) -> int:
        return ((addr - self.window_base) % self.page_size) // self.block_size


def resolve_conflict(req: MemoryRequest, job: SwapJob) -> ConflictDecision:
    """Route a block-local request against the swap progress of its page."""
    block = job.block_of(req.addr)
    if job.block_of(req.end - 1) != block:
        raise ValueError("request must not cross a DMA block boundary")
    if block < job.progress:
        return ConflictDecision.DESTINATION
    if block == job.in_flight:
        return ConflictDecision.STALL
    return ConflictDecision.SOURCE


class DmaEngine:
    """
    Runs at most `dma_max_jobs` jobs; further directives wait in a bounded FIFO.
    Block data moves atomically at each block's completion time, through the
    staging buffer.
    """

    def __init__(self, cfg: SimConfig, table: RedirectionTable, memories: Dict[Device, DeviceMemory],
                 devices: Dict[Device, DeviceModel], queue: EventQueue, counters: CounterSet,
                 on_release: Callable[[MemoryRequest], None] | None = None) -> None:
        self.table = table
        self.memories = memories
        self.devices = devices
        self.queue = queue
        self.counters = counters
        self.on_release = on_release or (lambda piece: None)
        self.block_size = cfg.dma_block
        self.page_size = cfg.page_size
        self.window_base = cfg.window_base
        self.blocks_per_page = cfg.blocks_per_page
        self.buffer_blocks = cfg.dma_buffer_blocks
        self.max_jobs = cfg.dma_max_jobs
        self.max_pending = cfg.dma_max_pending

        self.jobs: Dict[int, SwapJob] = {}            # host page -> active job
        self.active: List[SwapJob] = []
        self.pending: Deque[Tuple[int, Optional[int]]] = deque()
        self._pending_pages: Dict[int, int] = {}      # page -> refcount

    # -------------------- Busy view for policies --------------------

    def __contains__(self, page: object) -> bool:
        return page in self.jobs or page in self._pending_pages

    def job_for(self, page: int) -> Optional[SwapJob]:
        return self.jobs.get(page)

    @property
    def idle(self) -> bool:
        return not self.active and not self.pending

    # -------------------- Directives --------------------

    def submit(self, page_a: int, page_b: Optional[int], now: int) -> bool:
        """Start a directive now, or queue it. Returns False when it was dropped."""
        if page_a in self or (page_b is not None and page_b in self):
            return self._drop(page_a, page_b, "page already migrating")
        if len(self.active) < self.max_jobs:
            return self._try_start(page_a, page_b, now)
        if len(self.pending) >= self.max_pending:
            return self._drop(page_a, page_b, "pending queue full")
        self.pending.append((page_a, page_b))
        for p in (page_a, page_b):
            if p is not None:
                self._pending_pages[p] = self._pending_pages.get(p, 0) + 1
        return True

    def _drop(self, page_a: int, page_b: Optional[int], why: str) -> bool:
        self.counters.migrations_dropped += 1
        log.debug("migration %s<->%s dropped: %s", page_a, page_b, why)
        return False

    def _try_start(self, page_a: int, page_b: Optional[int], now: int) -> bool:
        try:
            if page_b is None:
                self.start_move(page_a, now)
            else:
                self.start_swap(page_a, page_b, now)
        except (SamePage, SameDevice, SwapInProgress, OutOfMemory) as e:
            return self._drop(page_a, page_b, str(e))
        return True

    def _start_pending(self, now: int) -> None:
        while self.pending and len(self.active) < self.max_jobs:
            a, b = self.pending.popleft()
            for p in (a, b):
                if p is not None:
                    left = self._pending_pages[p] - 1
                    if left:
                        self._pending_pages[p] = left
                    else:
                        del self._pending_pages[p]
            self._try_start(a, b, now)

    # -------------------- Jobs --------------------

    def _new_job(self, page_a: int, page_b: Optional[int], src_a: DeviceAddress,
                 src_b: DeviceAddress, now: int, schedule: bool) -> SwapJob:
        job = SwapJob(
            page_a=page_a, page_b=page_b, src_a=src_a, src_b=src_b,
            blocks=self.blocks_per_page, block_size=self.block_size,
            page_size=self.page_size, window_base=self.window_base,
            buffer=bytearray(self.block_size * self.buffer_blocks),
            in_flight=0, started=now, auto=schedule,
        )
        if job.blocks == 1:
            job.state = JobState.DRAINING
        for p in job.pages():
            self.jobs[p] = job
        self.active.append(job)
        if schedule:
            t = now + self._block_cycles(job, first=True)
            self.queue.schedule(t, self.step_block, job, t)
        log.debug("job start %s", job.pages())
        return job

    def start_swap(self, page_a: int, page_b: int, now: int = 0, *, schedule: bool = True) -> SwapJob:
        if page_a == page_b:
            raise SamePage(f"cannot swap host page {page_a} with itself")
        if page_a in self.jobs or page_b in self.jobs:
            raise SwapInProgress(f"page {page_a if page_a in self.jobs else page_b} already has an active swap")
        la, lb = self.table.location(page_a), self.table.location(page_b)
        if la is None or lb is None:
            raise OutOfMemory(f"swap of unmapped page ({page_a}, {page_b})")
        if la.device is lb.device:
            raise SameDevice(f"pages {page_a} and {page_b} both live in {la.device.value}")
        return self._new_job(page_a, page_b, la, lb, now, schedule)

    def start_move(self, page_a: int, now: int = 0, *, schedule: bool = True) -> SwapJob:
        """Promote/demote page_a into the lowest free frame of the other device."""
        if page_a in self.jobs:
            raise SwapInProgress(f"page {page_a} already has an active swap")
        la = self.table.location(page_a)
        if la is None:
            raise OutOfMemory(f"move of unmapped page {page_a}")
        dst = la.device.other
        dpage = self.table.reserve(dst)
        return self._new_job(page_a, None, la, DeviceAddress(dst, dpage * self.page_size), now, schedule)

    def _block_cycles(self, job: SwapJob, *, first: bool) -> int:
        da, db = self.devices[job.src_a.device], self.devices[job.src_b.device]
        r = max(da.access_cycles(Op.READ), db.access_cycles(Op.READ))
        w = max(da.access_cycles(Op.WRITE), db.access_cycles(Op.WRITE))
        if self.buffer_blocks >= 2 and not first:
            return max(r, w)   # next read overlaps the previous write
        return r + w

    def step_block(self, job: SwapJob, now: int) -> SwapJob:
        """Complete the exchange of block `progress`; commit the table on the last one."""
        if job.state is JobState.ABORTED:
            return job
        if job.state is JobState.DONE:
            raise SimError("step on a finished job")
        k = job.progress
        bs = self.block_size
        ma, mb = self.memories[job.src_a.device], self.memories[job.src_b.device]
        oa, ob = job.src_a.offset + k * bs, job.src_b.offset + k * bs
        buf = job.buffer
        ps = self.page_size
        a_live = (job.src_a.offset // ps) in ma.pages
        b_live = (job.src_b.offset // ps) in mb.pages
        if job.is_move:
            if a_live:
                buf[:bs] = ma.read(oa, bs)
                mb.write(ob, buf[:bs])
            self.counters.dma_blocks_moved += 1
        else:
            if a_live or b_live:
                buf[:bs] = ma.read(oa, bs)
                ma.write(oa, mb.read(ob, bs))
                mb.write(ob, buf[:bs])
            self.counters.dma_blocks_moved += 2
            self.counters.dma(job.src_b.device, Op.READ, bs)
            self.counters.dma(job.src_a.device, Op.WRITE, bs)
        self.counters.dma(job.src_a.device, Op.READ, bs)
        self.counters.dma(job.src_b.device, Op.WRITE, bs)

        job.progress = k + 1
        if job.progress == job.blocks:
            self._finish(job, now)
        else:
            job.in_flight = job.progress
            if job.progress == job.blocks - 1:
                job.state = JobState.DRAINING
            if job.auto:
                t = now + self._block_cycles(job, first=False)
                self.queue.schedule(t, self.step_block, job, t)
            self._release(job)
        return job

    def _finish(self, job: SwapJob, now: int) -> None:
        job.in_flight = None
        job.state = JobState.DONE
        if job.is_move:
            ps = self.page_size
            self.table.commit_move(job.page_a, job.src_b.device, job.src_b.offset // ps)
            self.memories[job.src_a.device].discard(job.src_a.offset // ps)
            self.counters.moves_completed += 1
        else:
            self.table.commit_swap(job.page_a, job.page_b)
            self.counters.swaps_completed += 1
        for p in job.pages():
            del self.jobs[p]
        self.active.remove(job)
        log.debug("job done %s after %d cycles", job.pages(), now - job.started)
        self._release(job)
        if job.auto:
            self._start_pending(now)

    def _release(self, job: SwapJob) -> None:
        if not job.parked:
            return
        parked, job.parked = job.parked, []
        for piece in parked:
            self.on_release(piece)

    # -------------------- Frame reclaim --------------------

    def reclaim_frame(self) -> bool:
        """Abort the newest in-flight move so its reserved frame can back a first touch."""
        for job in reversed(self.active):
            if job.is_move:
                self._abort(job, self.queue.now)
                return True
        return False

    def _abort(self, job: SwapJob, now: int) -> None:
        ps, bs = self.page_size, self.block_size
        ma, mb = self.memories[job.src_a.device], self.memories[job.src_b.device]
        dst = job.src_b.offset // ps
        # blocks below progress (and writes routed to them) live only at the destination
        n = job.progress * bs
        if n and dst in mb.pages:
            ma.write(job.src_a.offset, mb.read(job.src_b.offset, n))
            self.counters.dma(job.src_b.device, Op.READ, n)
            self.counters.dma(job.src_a.device, Op.WRITE, n)
        mb.discard(dst)
        self.table.unreserve(job.src_b.device, dst)
        job.in_flight = None
        job.state = JobState.ABORTED
        del self.jobs[job.page_a]
        self.active.remove(job)
        self.counters.moves_aborted += 1
        log.debug("move of page %d aborted after %d of %d blocks", job.page_a, job.progress, job.blocks)
        self._release(job)
        if job.auto and self.pending:
            self.queue.schedule(now, self._start_pending, now)
