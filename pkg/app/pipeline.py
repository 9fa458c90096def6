# app/pipeline.py
# The HMMU request path: header FIFO, policy dispatch to the device models or
# the DMA engine, and tag matching so responses leave in arrival order.
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Deque, Dict, List, Optional, Tuple

from app.config import SimConfig
from app.core import Device, DeviceAddress, MemoryRequest, Op, Response, split_request
from app.dma import ConflictDecision, DmaEngine, SwapJob, resolve_conflict
from app.errors import DuplicateCompletion, InvariantBreach, UnknownTag
from app.events import EventQueue
from app.memory import DeviceMemory, image_checksum
from app.placement.hotness import HotnessState
from app.placement.policies import Policy, make_hotness, make_policy
from app.placement.table import RedirectionTable
from app.telemetry import CounterSet
from app.timing import DeviceModel, build_device_models

log = logging.getLogger("pipeline")


@dataclass(frozen=True, slots=True)
class Header:
    tag: int
    op: Op
    addr: int
    size: int


class HeaderFifo:
    """Headers of unanswered requests, oldest first."""

    def __init__(self) -> None:
        self._q: Deque[Header] = deque()

    def push(self, req: MemoryRequest) -> Header:
        if self._q and req.tag <= self._q[-1].tag:
            raise InvariantBreach(f"header tag {req.tag} out of order")
        h = Header(req.tag, req.op, req.addr, req.size)
        self._q.append(h)
        return h

    def head(self) -> Optional[Header]:
        return self._q[0] if self._q else None

    def pop(self, tag: int) -> Header:
        if not self._q or self._q[0].tag != tag:
            raise InvariantBreach(f"response {tag} is not the FIFO head")
        return self._q.popleft()

    def __len__(self) -> int:
        return len(self._q)


class ReorderBuffer:
    """Completed responses wait here until every older tag has left."""

    def __init__(self) -> None:
        self.done: Dict[int, Response] = {}
        self.release_cursor = 0
        self.highwater = 0

    def put(self, resp: Response) -> int:
        if resp.tag < self.release_cursor or resp.tag in self.done:
            raise DuplicateCompletion(f"tag {resp.tag} completed twice")
        self.done[resp.tag] = resp
        depth = len(self.done)
        if depth > self.highwater:
            self.highwater = depth
        return depth

    def release(self) -> List[Response]:
        out: List[Response] = []
        done = self.done
        while self.release_cursor in done:
            out.append(done.pop(self.release_cursor))
            self.release_cursor += 1
        return out

    def __len__(self) -> int:
        return len(self.done)


@dataclass
class _InFlight:
    req: MemoryRequest
    posted: bool = False
    dispatched: bool = False
    next_sub: int = 0
    # sub -> byte offset of the piece within the request
    outstanding: Dict[int, int] = field(default_factory=dict)
    data: Optional[bytearray] = None


class Hmmu:
    """
    Presents DRAM and NVM as one flat address window.

    A request is routed and its bytes are read or written at its dispatch
    instant (arrival + control delay), in tag order; device queueing only
    shapes when its response becomes ready. Pieces that hit the block a
    DMA job is moving wait for that block and are replayed in order.
    """

    def __init__(self, cfg: SimConfig, *, devices: Dict[Device, DeviceModel] | None = None,
                 policy: Policy | None = None, table: RedirectionTable | None = None) -> None:
        self.cfg = cfg
        self.queue = EventQueue()
        self.devices = devices if devices is not None else build_device_models(cfg)
        self.memories = {d: DeviceMemory(cfg.page_size) for d in (Device.DRAM, Device.NVM)}
        self.table = table if table is not None else RedirectionTable(cfg)
        self.hotness: HotnessState = make_hotness(cfg)
        self.policy: Policy = policy if policy is not None else make_policy(cfg)
        self.counters = CounterSet()
        self.dma = DmaEngine(cfg, self.table, self.memories, self.devices, self.queue,
                             self.counters, on_release=self._replay)
        self.table.reclaim = self.dma.reclaim_frame
        self.fifo = HeaderFifo()
        self.rob = ReorderBuffer()
        self._inflight: Dict[int, _InFlight] = {}
        self._next_tag = 0
        self._newest_done = -1
        self.delivered = 0
        self.last_completion = 0

    @property
    def now(self) -> int:
        return self.queue.now

    # -------------------- Ingest / dispatch --------------------

    def ingest(self, req: MemoryRequest) -> int:
        """Accept a request, stamp its tag and schedule dispatch after the control delay."""
        self.table.page_of(req.addr)
        self.table.page_of(req.end - 1)
        tag = self._next_tag
        self._next_tag += 1
        arrival = max(req.arrival, self.queue.now)
        req = replace(req, tag=tag, arrival=arrival)
        self.fifo.push(req)
        self._inflight[tag] = _InFlight(req, posted=self.cfg.posted_writes and req.op is Op.WRITE)
        self.queue.schedule(arrival + self.cfg.control_cycles, self._dispatch, tag)
        return tag

    def _dispatch(self, tag: int) -> None:
        inf = self._inflight[tag]
        req = inf.req
        now = self.queue.now
        if req.op is Op.READ:
            inf.data = bytearray(req.size)
        for piece in split_request(req, self.cfg.page_size):
            piece = self._register(inf, piece)
            action = self.policy.on_access(piece, self.table, self.hotness, self.dma)
            page = self.table.page_of(piece.addr)
            job = self.dma.job_for(page)
            if job is None:
                self._access(piece, action.route, now)
            else:
                self._conflict(piece, job, now)
            if action.migrate is not None:
                self.dma.submit(*action.migrate, now)
        inf.dispatched = True
        if inf.posted:
            inf.outstanding.clear()
            self._assemble(inf, now)
        elif not inf.outstanding:
            self._assemble(inf, now)

    def _register(self, inf: _InFlight, piece: MemoryRequest) -> MemoryRequest:
        sub = inf.next_sub
        inf.next_sub += 1
        inf.outstanding[sub] = piece.addr - inf.req.addr
        return replace(piece, sub=sub)

    def _conflict(self, piece: MemoryRequest, job: SwapJob, now: int) -> None:
        """Split a piece at DMA block boundaries and route each part against the swap progress."""
        inf = self._inflight[piece.tag]
        parts = split_request(piece, self.cfg.dma_block)
        if len(parts) > 1:
            del inf.outstanding[piece.sub]
            parts = [self._register(inf, p) for p in parts]
        for part in parts:
            self._resolve(part, job, now)

    def _resolve(self, part: MemoryRequest, job: SwapJob, now: int) -> None:
        decision = resolve_conflict(part, job)
        if decision is ConflictDecision.STALL:
            job.parked.append(part)
            self.counters.stall_events += 1
            return
        page = self.table.page_of(part.addr)
        base = job.destination_of(page) if decision is ConflictDecision.DESTINATION else job.source_of(page)
        off = (part.addr - self.cfg.window_base) % self.cfg.page_size
        self._access(part, DeviceAddress(base.device, base.offset + off), now)

    def _replay(self, part: MemoryRequest) -> None:
        """A parked piece whose block just landed; route it again at the current instant."""
        now = self.queue.now
        job = self.dma.job_for(self.table.page_of(part.addr))
        if job is None:
            self._access(part, self.table.lookup(part.addr), now)
        else:
            self._resolve(part, job, now)

    def _access(self, piece: MemoryRequest, loc: DeviceAddress, now: int) -> None:
        inf = self._inflight.get(piece.tag)
        mem = self.memories[loc.device]
        data: Optional[bytes] = None
        if piece.op is Op.WRITE:
            mem.write(loc.offset, piece.payload)
        else:
            data = mem.read(loc.offset, piece.size)
        self.counters.demand(loc.device, piece.op, piece.size)
        done = self.devices[loc.device].service(piece.op, now, piece.tag)
        self.counters.samples[loc.device][done - piece.arrival] += 1
        # posted writes were answered at dispatch
        if inf is not None and not inf.posted:
            self.queue.schedule(done, self.complete, piece.tag, piece.sub, data)

    # -------------------- Completion / delivery --------------------

    def complete(self, tag: int, sub: int, data: Optional[bytes]) -> None:
        inf = self._inflight.get(tag)
        if inf is None:
            raise UnknownTag(f"completion for tag {tag} which is not in flight")
        offset = inf.outstanding.pop(sub, None)
        if offset is None:
            raise DuplicateCompletion(f"tag {tag} piece {sub} completed twice")
        if data is not None:
            inf.data[offset:offset + len(data)] = data
        if inf.dispatched and not inf.outstanding:
            self._assemble(inf, self.queue.now)

    def _assemble(self, inf: _InFlight, now: int) -> None:
        req = inf.req
        del self._inflight[req.tag]
        if req.tag < self._newest_done:
            self.counters.ooo_completions += 1
        else:
            self._newest_done = req.tag
        data = bytes(inf.data) if inf.data is not None else None
        self.counters.buffer_depth(self.rob.put(Response(req.tag, req.op, data, now)))
        self.counters.latency(now - req.arrival)
        self.last_completion = max(self.last_completion, now)

    def drain(self, now: int | None = None) -> List[Response]:
        """Release every response that extends the in-order prefix."""
        out = self.rob.release()
        for resp in out:
            self.fifo.pop(resp.tag)
        self.delivered += len(out)
        return out

    # -------------------- Time --------------------

    def run_until(self, t: int) -> None:
        self.queue.run_until(t)

    def finish(self) -> int:
        """Run to quiescence and check it; returns the time of the last event."""
        self.queue.run()
        self.check_quiescent()
        log.debug("quiescent at cycle %d, %d requests", self.queue.now, self._next_tag)
        return self.queue.now

    def check_quiescent(self) -> None:
        problems: List[str] = []
        if self._inflight:
            problems.append(f"{len(self._inflight)} requests still in flight")
        if not self.dma.idle:
            problems.append("DMA jobs still active")
        if len(self.fifo) != len(self._inflight) + len(self.rob):
            problems.append("header FIFO out of step with in-flight requests")
        if problems:
            raise InvariantBreach("; ".join(problems))
        self.table.check()

    @property
    def in_flight(self) -> int:
        return len(self._inflight)

    # -------------------- Final image --------------------

    def host_pages(self) -> List[Tuple[int, bytes]]:
        """(host page, contents) of every materialized mapped page."""
        ps = self.cfg.page_size
        out: List[Tuple[int, bytes]] = []
        for page, loc in self.table.mapped():
            buf = self.memories[loc.device].pages.get(loc.offset // ps)
            if buf is not None:
                out.append((page, bytes(buf)))
        return out

    def checksum(self) -> str:
        return image_checksum(self.host_pages())
