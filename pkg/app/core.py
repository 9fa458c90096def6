# app/core.py
# Shared value types for the hybrid memory model.
from __future__ import annotations

from dataclasses import dataclass, replace
from decimal import Decimal
from enum import Enum
from fractions import Fraction
from typing import List, Optional

MAX_REQUEST_BYTES = 4096


class Device(str, Enum):
    DRAM = "dram"
    NVM = "nvm"

    @property
    def other(self) -> "Device":
        return Device.NVM if self is Device.DRAM else Device.DRAM


class Op(str, Enum):
    READ = "R"
    WRITE = "W"


@dataclass(frozen=True, slots=True)
class DeviceAddress:
    device: Device
    offset: int

    def page(self, page_size: int) -> int:
        return self.offset // page_size


@dataclass(frozen=True, slots=True)
class MemoryRequest:
    op: Op
    addr: int
    size: int
    arrival: int = 0
    tag: int = -1
    payload: Optional[bytes] = None
    sub: int = 0

    def __post_init__(self) -> None:
        if self.size < 1:
            raise ValueError("request size must be >= 1")
        if (self.op is Op.WRITE) != (self.payload is not None):
            raise ValueError("payload is required for writes and forbidden for reads")
        if self.payload is not None and len(self.payload) != self.size:
            raise ValueError("payload length must equal size")

    @property
    def end(self) -> int:
        return self.addr + self.size


@dataclass(frozen=True, slots=True)
class Response:
    tag: int
    op: Op
    data: Optional[bytes]
    completion: int


@dataclass(frozen=True, slots=True)
class SimTime:
    """Simulated time: an integer cycle count plus the clock scale."""
    cycles: int
    ns_per_cycle: Fraction = Fraction(4)

    @property
    def ns(self) -> Fraction:
        return self.cycles * self.ns_per_cycle

    def advance(self, cycles: int) -> "SimTime":
        if cycles < 0:
            raise ValueError("time never decreases")
        return SimTime(self.cycles + cycles, self.ns_per_cycle)

    def ns_text(self) -> str:
        """Exact decimal rendering; ns_per_cycle comes from a decimal config value."""
        ns = self.ns
        return str(Decimal(ns.numerator) / Decimal(ns.denominator))


def is_pow2(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def split_request(req: MemoryRequest, page_size: int) -> List[MemoryRequest]:
    """
    Cut a request at every `page_size` boundary.
    Sub-requests keep the tag and get ascending `sub` indices; payloads are sliced.
    """
    first = req.addr // page_size
    last = (req.end - 1) // page_size
    if first == last:
        return [req]
    out: List[MemoryRequest] = []
    addr = req.addr
    for i, boundary_page in enumerate(range(first + 1, last + 2)):
        end = min(boundary_page * page_size, req.end)
        lo, hi = addr - req.addr, end - req.addr
        payload = req.payload[lo:hi] if req.payload is not None else None
        out.append(replace(req, addr=addr, size=end - addr, payload=payload, sub=i))
        addr = end
    return out
