# app/runner.py
# One simulation end to end: config + trace (or synthetic workload) in,
# deterministic JSON report out.
from __future__ import annotations

import logging
import sys
import time
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Union

from pydantic import BaseModel, ConfigDict

from app.config import SETTINGS, SimConfig, config_echo
from app.core import Device, SimTime
from app.errors import InvariantBreach
from app.middleware import AllocatorSummary, seed as seed_allocation
from app.oracle import Verifier
from app.pipeline import Hmmu
from app.synth import WorkloadSpec, synthesize
from app.telemetry import CounterSnapshot, EnergyEstimate, LatencySummary, energy, latency_summary, snapshot
from app.trace import TraceRecord, read_trace, to_requests

log = logging.getLogger("runner")

TraceSource = Union[str, Path, Iterable[str], Iterable[TraceRecord]]


class PolicyReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    stats: Dict[str, int]


class Report(BaseModel):
    """Everything in here is simulated; no wall-clock values, so reruns are byte-identical."""
    model_config = ConfigDict(frozen=True)

    config: Dict[str, Any]
    source: str
    seed: int
    requests: int
    run_cycles: int
    run_ns: str
    policy: PolicyReport
    counters: CounterSnapshot
    energy: Optional[EnergyEstimate] = None
    latency: Dict[str, LatencySummary]
    mapped_pages: Dict[str, int]
    allocator: Optional[AllocatorSummary] = None
    checksum: str
    verified: bool = False

    def to_json(self, indent: Optional[int] = None) -> str:
        return self.model_dump_json(indent=SETTINGS.report_indent if indent is None else indent)


def _records(trace: TraceSource, cfg: SimConfig) -> Iterable[TraceRecord]:
    if isinstance(trace, (str, Path)):
        return read_trace(trace, cfg)
    items = iter(trace)
    first = next(items, None)
    if first is None:
        return ()
    if isinstance(first, TraceRecord):
        return _chain(first, items)
    return read_trace(_chain(first, items), cfg)


def _chain(first, rest):
    yield first
    yield from rest


def run(cfg: SimConfig, *, trace: TraceSource | None = None, workload: WorkloadSpec | None = None,
        seed: Optional[int] = None, verify: bool = False, source: str = "") -> Report:
    """Ingest every record (streaming), run to quiescence and build the report."""
    if (trace is None) == (workload is None):
        raise ValueError("exactly one of trace or workload is required")
    seed = cfg.seed if seed is None else seed
    hmmu = Hmmu(cfg)

    allocator = None
    if workload is not None:
        w = synthesize(workload, cfg, seed)
        placed = sum(seed_allocation(hmmu.table, w.pool, a) for a in w.allocations)
        if placed:
            log.info("seeded %d hinted pages into the redirection table", placed)
        allocator = w.pool.summary()
        records = w.records
        source = source or "synthetic"
    else:
        records = _records(trace, cfg)
        source = source or (str(trace) if isinstance(trace, (str, Path)) else "inline")

    verifier = Verifier(cfg.window_base, cfg.page_size) if verify else None
    log.info("run start: %s, policy=%s, seed=%d", source, cfg.policy.name, seed)
    started = time.perf_counter()

    n = 0
    for req in to_requests(records, seed):
        hmmu.run_until(req.arrival)
        hmmu.ingest(req)
        if verifier is not None:
            verifier.expect(req)
        out = hmmu.drain()
        if verifier is not None and out:
            verifier.deliver_all(out)
        n += 1

    cycles = hmmu.finish()
    out = hmmu.drain()
    if verifier is not None:
        verifier.deliver_all(out)
    if hmmu.delivered != n:
        raise InvariantBreach(f"{n} requests ingested but {hmmu.delivered} responses delivered")
    checksum = hmmu.checksum()
    if verifier is not None:
        verifier.finish(checksum)

    elapsed = time.perf_counter() - started
    rps = n / elapsed if elapsed > 0 else float("inf")
    log.info("run done: %d requests, %d cycles, %.0f req/s", n, cycles, rps)
    if n >= 10_000 and rps < SETTINGS.perf_warn_rps:
        log.warning("throughput %.0f req/s below the %d req/s soft floor", rps, SETTINGS.perf_warn_rps)

    counters = hmmu.counters
    return Report(
        config=config_echo(cfg),
        source=source,
        seed=seed,
        requests=n,
        run_cycles=cycles,
        run_ns=SimTime(cycles, Fraction(cfg.ns_per_cycle)).ns_text(),
        policy=PolicyReport(name=hmmu.policy.name, stats=hmmu.policy.stats()),
        counters=snapshot(counters),
        energy=energy(counters, cfg) if cfg.report_energy else None,
        latency={d.value: latency_summary(counters.samples[d]) for d in (Device.DRAM, Device.NVM)},
        mapped_pages={d.value: len(hmmu.table.resident(d)) for d in (Device.DRAM, Device.NVM)},
        allocator=allocator,
        checksum=checksum,
        verified=verifier is not None,
    )


def write_report(report: Report, path: Union[str, Path, None] = None) -> str:
    text = report.to_json()
    if path is None or str(path) == "-":
        sys.stdout.write(text + "\n")
    else:
        p = Path(path)
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(text + "\n", encoding="utf-8")
        log.info("report written to %s", p)
    return text
