# app/telemetry.py
# Per-device transaction/byte counters, migration activity, latency stats and
# the linear dynamic-energy estimate.
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, computed_field

from app.config import EnergyCoeffs, SimConfig
from app.core import Device, Op

HIST_BUCKETS = 40  # bucket i holds latencies with bit_length i: 0, 1, 2-3, 4-7, ...


# -------------------- Events --------------------

@dataclass(frozen=True)
class DeviceAccess:
    device: Device
    op: Op
    nbytes: int
    dma: bool = False


@dataclass(frozen=True)
class DmaBlock:
    count: int = 1


@dataclass(frozen=True)
class Stall:
    pass


@dataclass(frozen=True)
class BufferDepth:
    depth: int


@dataclass(frozen=True)
class Latency:
    cycles: int


Event = Union[DeviceAccess, DmaBlock, Stall, BufferDepth, Latency]


# -------------------- Live counters --------------------

@dataclass
class DeviceCounters:
    read_txns: int = 0
    write_txns: int = 0
    read_bytes: int = 0
    write_bytes: int = 0
    dma_read_bytes: int = 0
    dma_write_bytes: int = 0


@dataclass
class CounterSet:
    devices: Dict[Device, DeviceCounters] = field(
        default_factory=lambda: {Device.DRAM: DeviceCounters(), Device.NVM: DeviceCounters()}
    )
    dma_blocks_moved: int = 0
    swaps_completed: int = 0
    moves_completed: int = 0
    moves_aborted: int = 0
    migrations_dropped: int = 0
    stall_events: int = 0
    reorder_buffer_highwater: int = 0
    ooo_completions: int = 0
    latency_hist: List[int] = field(default_factory=lambda: [0] * HIST_BUCKETS)
    # per-device demand latency (cycles) -> occurrences; bounded by the distinct latencies seen
    samples: Dict[Device, Counter] = field(default_factory=lambda: {Device.DRAM: Counter(), Device.NVM: Counter()})

    # hot-path helpers; record() is the general entry point
    def demand(self, device: Device, op: Op, nbytes: int) -> None:
        c = self.devices[device]
        if op is Op.READ:
            c.read_txns += 1
            c.read_bytes += nbytes
        else:
            c.write_txns += 1
            c.write_bytes += nbytes

    def dma(self, device: Device, op: Op, nbytes: int) -> None:
        c = self.devices[device]
        if op is Op.READ:
            c.dma_read_bytes += nbytes
        else:
            c.dma_write_bytes += nbytes

    def latency(self, cycles: int) -> None:
        self.latency_hist[min(cycles.bit_length(), HIST_BUCKETS - 1)] += 1

    def buffer_depth(self, depth: int) -> None:
        if depth > self.reorder_buffer_highwater:
            self.reorder_buffer_highwater = depth


def record(counters: CounterSet, event: Event) -> CounterSet:
    if isinstance(event, DeviceAccess):
        if event.dma:
            counters.dma(event.device, event.op, event.nbytes)
        else:
            counters.demand(event.device, event.op, event.nbytes)
    elif isinstance(event, DmaBlock):
        counters.dma_blocks_moved += event.count
    elif isinstance(event, Stall):
        counters.stall_events += 1
    elif isinstance(event, BufferDepth):
        counters.buffer_depth(event.depth)
    elif isinstance(event, Latency):
        counters.latency(event.cycles)
    else:
        raise TypeError(f"unknown telemetry event {event!r}")
    return counters


# -------------------- Snapshots --------------------

class DeviceCounterSnapshot(BaseModel):
    model_config = ConfigDict(frozen=True)

    read_txns: int
    write_txns: int
    read_bytes: int
    write_bytes: int
    dma_read_bytes: int
    dma_write_bytes: int

    @computed_field
    @property
    def human(self) -> Dict[str, str]:
        """Byte counters in binary units, next to the raw integers."""
        return {
            "read_bytes": human_bytes(self.read_bytes),
            "write_bytes": human_bytes(self.write_bytes),
            "dma_read_bytes": human_bytes(self.dma_read_bytes),
            "dma_write_bytes": human_bytes(self.dma_write_bytes),
        }


class CounterSnapshot(BaseModel):
    model_config = ConfigDict(frozen=True)

    dram: DeviceCounterSnapshot
    nvm: DeviceCounterSnapshot
    dma_blocks_moved: int
    swaps_completed: int
    moves_completed: int
    moves_aborted: int
    migrations_dropped: int
    stall_events: int
    reorder_buffer_highwater: int
    ooo_completions: int
    responses: int
    latency_hist: Tuple[int, ...]

    def device(self, device: Device) -> DeviceCounterSnapshot:
        return self.dram if device is Device.DRAM else self.nvm


def snapshot(counters: CounterSet) -> CounterSnapshot:
    def dev(d: Device) -> DeviceCounterSnapshot:
        c = counters.devices[d]
        return DeviceCounterSnapshot(
            read_txns=c.read_txns, write_txns=c.write_txns,
            read_bytes=c.read_bytes, write_bytes=c.write_bytes,
            dma_read_bytes=c.dma_read_bytes, dma_write_bytes=c.dma_write_bytes,
        )
    return CounterSnapshot(
        dram=dev(Device.DRAM),
        nvm=dev(Device.NVM),
        dma_blocks_moved=counters.dma_blocks_moved,
        swaps_completed=counters.swaps_completed,
        moves_completed=counters.moves_completed,
        moves_aborted=counters.moves_aborted,
        migrations_dropped=counters.migrations_dropped,
        stall_events=counters.stall_events,
        reorder_buffer_highwater=counters.reorder_buffer_highwater,
        ooo_completions=counters.ooo_completions,
        responses=sum(counters.latency_hist),
        latency_hist=tuple(counters.latency_hist),
    )


# -------------------- Energy --------------------

class DeviceEnergy(BaseModel):
    model_config = ConfigDict(frozen=True)

    read_pj: int
    write_pj: int
    read_nj: str
    write_nj: str


class EnergyEstimate(BaseModel):
    model_config = ConfigDict(frozen=True)

    dram: DeviceEnergy
    nvm: DeviceEnergy
    total_pj: int
    total_nj: str


def _pj_per_byte(nj: Optional[Decimal]) -> int:
    if nj is None:
        raise ValueError("energy coefficient not configured")
    if nj < 0:
        raise ValueError("energy coefficients must be non-negative")
    return int(nj * 1000)


def _fmt_nj(pj: int) -> str:
    return f"{pj // 1000}.{pj % 1000:03d}"


def energy(counters: Union[CounterSet, CounterSnapshot],
           coeffs: Union[SimConfig, Mapping[Device, EnergyCoeffs]]) -> EnergyEstimate:
    """
    Linear model over device-port bytes (demand + DMA):
    sum over devices of read_bytes * e_rd + write_bytes * e_wr, in integer picojoules.
    """
    snap = snapshot(counters) if isinstance(counters, CounterSet) else counters
    if isinstance(coeffs, SimConfig):
        coeffs = {Device.DRAM: coeffs.energy_dram, Device.NVM: coeffs.energy_nvm}
    parts: Dict[Device, DeviceEnergy] = {}
    total = 0
    for dev in (Device.DRAM, Device.NVM):
        c = snap.device(dev)
        k = coeffs[dev]
        rd = (c.read_bytes + c.dma_read_bytes) * _pj_per_byte(k.read_nj_per_byte)
        wr = (c.write_bytes + c.dma_write_bytes) * _pj_per_byte(k.write_nj_per_byte)
        parts[dev] = DeviceEnergy(read_pj=rd, write_pj=wr, read_nj=_fmt_nj(rd), write_nj=_fmt_nj(wr))
        total += rd + wr
    return EnergyEstimate(dram=parts[Device.DRAM], nvm=parts[Device.NVM],
                          total_pj=total, total_nj=_fmt_nj(total))


# -------------------- Formatting / summaries --------------------

_UNITS = ("B", "KiB", "MiB", "GiB", "TiB", "PiB")


def human_bytes(n: int) -> str:
    """4803395584 -> '4.47 GiB'."""
    if n < 1024:
        return f"{n} B"
    v = float(n)
    i = 0
    while v >= 1024 and i < len(_UNITS) - 1:
        v /= 1024
        i += 1
    return f"{v:.2f} {_UNITS[i]}"


class LatencySummary(BaseModel):
    model_config = ConfigDict(frozen=True)

    count: int
    mean: Optional[float]
    p50: Optional[int]
    p95: Optional[int]
    p99: Optional[int]
    max: Optional[int]


def latency_summary(samples: Union[Sequence[int], Mapping[int, int]]) -> LatencySummary:
    """Exact lower percentiles from raw samples or a latency -> occurrences histogram."""
    if isinstance(samples, Mapping):
        items = sorted((v, c) for v, c in samples.items() if c > 0)
        values = np.fromiter((v for v, _ in items), dtype=np.int64, count=len(items))
        counts = np.fromiter((c for _, c in items), dtype=np.int64, count=len(items))
    else:
        values, counts = np.unique(np.asarray(samples, dtype=np.int64), return_counts=True)
    n = int(counts.sum())
    if n == 0:
        return LatencySummary(count=0, mean=None, p50=None, p95=None, p99=None, max=None)
    cum = np.cumsum(counts)
    p50, p95, p99 = (int(values[np.searchsorted(cum, (n - 1) * q // 100, side="right")]) for q in (50, 95, 99))
    return LatencySummary(
        count=n,
        mean=round(float((values * counts).sum()) / n, 3),
        p50=p50, p95=p95, p99=p99,
        max=int(values[-1]),
    )
