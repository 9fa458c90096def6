# app/timing.py
# Per-device service latency and the stall-cycle scaling that turns a DRAM
# baseline into an emulated NVM.
from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass, field
from decimal import Decimal
from fractions import Fraction
from math import floor
from typing import Dict, List, Tuple

from app.config import DeviceTimingConfig, SimConfig
from app.core import Device, Op

log = logging.getLogger("timing")

_HALF = Fraction(1, 2)


def derive_stall_cycles(base_cycles: int, base_ns: Decimal | int, target_ns: Decimal | int) -> int:
    """
    Extra cycles so that base_cycles + result ~= base_cycles * target_ns / base_ns.
    Exact rational arithmetic, half-up rounding, clamped at 0.
    """
    extra = base_cycles * (Fraction(target_ns) / Fraction(base_ns) - 1)
    if extra <= 0:
        return 0
    return floor(extra + _HALF)


@dataclass(slots=True)
class DeviceState:
    """Slot occupancy of one device. A request waits for the earliest free slot."""
    outstanding_slots: int
    free_at: List[int] = field(default_factory=list)
    # (completion, start, tag) of every request not yet completed
    _live: List[Tuple[int, int, int]] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.free_at:
            self.free_at = [0] * self.outstanding_slots

    def _prune(self, now: int) -> None:
        live = self._live
        while live and live[0][0] <= now:
            heapq.heappop(live)

    def in_flight(self, now: int) -> List[Tuple[int, int]]:
        """(tag, completion) of requests being serviced at `now`."""
        self._prune(now)
        return sorted((tag, c) for c, s, tag in self._live if s <= now)

    def queued(self, now: int) -> List[int]:
        self._prune(now)
        return [tag for c, s, tag in sorted(self._live, key=lambda e: (e[1], e[2])) if s > now]


class DeviceModel:
    """Fixed-latency device behind `outstanding_slots` service slots and the link."""

    def __init__(self, device: Device, timing: DeviceTimingConfig, *,
                 link_latency: int, stall_read: int, stall_write: int) -> None:
        self.device = device
        self.timing = timing
        self.link_latency = link_latency
        self.stall = {Op.READ: stall_read, Op.WRITE: stall_write}
        self.base = {Op.READ: timing.base_read_cycles, Op.WRITE: timing.base_write_cycles}
        self.state = DeviceState(timing.outstanding_slots)

    def access_cycles(self, op: Op) -> int:
        """Device-side cost of one access (no link), as seen by the DMA engine."""
        return self.base[op] + self.stall[op]

    def service(self, op: Op, now: int, tag: int = -1) -> int:
        """Completion cycle of a request reaching this device at `now`."""
        st = self.state
        free_at = st.free_at
        i = min(range(len(free_at)), key=free_at.__getitem__) if len(free_at) > 1 else 0
        start = free_at[i] if free_at[i] > now else now
        done = start + self.base[op] + self.stall[op] + self.link_latency
        free_at[i] = done
        heapq.heappush(st._live, (done, start, tag))
        if len(st._live) > 4 * st.outstanding_slots + 64:
            st._prune(now)
        return done

    def reset(self) -> None:
        self.state = DeviceState(self.timing.outstanding_slots)


# -------------------- Calibration --------------------

@dataclass(frozen=True)
class RoundTrip:
    read: float
    write: float

    def __getitem__(self, op: Op) -> float:
        return self.read if op is Op.READ else self.write


def _closed_loop(model: DeviceModel, op: Op, samples: int) -> float:
    model.reset()
    t = 0
    total = 0
    for i in range(samples):
        done = model.service(op, t, i)
        total += done - t
        t = done  # next request leaves when the previous response lands
    model.reset()
    return total / samples


def measure_round_trip(cfg: SimConfig, samples: int = 1000, device: Device = Device.DRAM,
                       *, models: Dict[Device, DeviceModel] | None = None) -> RoundTrip:
    """
    Mean closed-loop round trip through an idle device.

    Without `models` this is the no-stall baseline for either device, so NVM
    and DRAM come out alike. Pass `build_device_models(cfg)` as `models` to
    measure the stalled devices whose read/write ratios follow the targets.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    if models is not None:
        model = models[device]
    else:
        timing = cfg.dram if device is Device.DRAM else cfg.nvm
        model = DeviceModel(device, timing, link_latency=cfg.link_latency, stall_read=0, stall_write=0)
    return RoundTrip(read=_closed_loop(model, Op.READ, samples), write=_closed_loop(model, Op.WRITE, samples))


def build_device_models(cfg: SimConfig) -> Dict[Device, DeviceModel]:
    """
    Measure the baseline round trip, then scale each device's stall cycles by
    target/base latency. `stall_basis=device` scales the device cycles only.
    """
    out: Dict[Device, DeviceModel] = {}
    for dev, timing in ((Device.DRAM, cfg.dram), (Device.NVM, cfg.nvm)):
        if cfg.stall_basis == "round_trip":
            rt = measure_round_trip(cfg, 1, dev)
            basis = {Op.READ: int(rt.read), Op.WRITE: int(rt.write)}
        else:
            basis = {Op.READ: timing.base_read_cycles, Op.WRITE: timing.base_write_cycles}
        sr = derive_stall_cycles(basis[Op.READ], timing.base_ns, timing.target_read_ns)
        sw = derive_stall_cycles(basis[Op.WRITE], timing.base_ns, timing.target_write_ns)
        out[dev] = DeviceModel(dev, timing, link_latency=cfg.link_latency, stall_read=sr, stall_write=sw)
        log.debug("%s stall cycles: read=%d write=%d (basis %s)", dev.value, sr, sw, cfg.stall_basis)
    return out
