# app/synth.py
# Synthetic workloads: allocations through the frame pool, then a seeded
# request stream with uniform, zipfian or streaming locality.
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path
from typing import Iterator, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from app.config import SimConfig, parse_bool, parse_decimal, parse_size
from app.core import Op, is_pow2
from app.errors import ConfigError, ConfigIssue, FootprintTooLarge, OutOfMemory
from app.middleware import Allocation, AllocationHint, FramePool
from app.trace import TraceRecord

log = logging.getLogger("synth")

_CHUNK = 65_536


class AllocSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    size: int = Field(gt=0)
    hint: AllocationHint = AllocationHint.NO_PREFERENCE


class WorkloadSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    allocs: Tuple[AllocSpec, ...] = ()
    footprint: Optional[int] = Field(default=None, gt=0)
    requests: int = Field(default=10_000, ge=0)
    read_fraction: Decimal = Field(default=Decimal("0.7"), ge=0, le=1)
    locality: Literal["uniform", "zipf", "stream"] = "uniform"
    zipf_s: float = Field(default=1.0, gt=0)
    size: int = 64
    gap: int = Field(default=1, ge=0)
    warmup: bool = True

    @property
    def total_bytes(self) -> int:
        if self.allocs:
            return sum(a.size for a in self.allocs)
        return self.footprint or 0


def parse_workload_text(text: str) -> WorkloadSpec:
    issues: List[ConfigIssue] = []
    data: dict = {}
    allocs: List[AllocSpec] = []
    seen: dict = {}

    for n, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if not body:
            continue
        key, *args = body.split()
        try:
            if key == "alloc":
                if len(args) not in (2, 3):
                    raise ValueError("expected 'alloc <name> <bytes> [dram|nvm]'")
                hint = AllocationHint.NO_PREFERENCE
                if len(args) == 3:
                    hint = AllocationHint(args[2].lower())
                allocs.append(AllocSpec(name=args[0], size=parse_size(args[1]), hint=hint))
                continue
            if key in seen:
                issues.append(ConfigIssue("DuplicateKey", key, f"already set on line {seen[key]}", n))
                continue
            seen[key] = n
            if key == "locality":
                if not args or args[0] not in ("uniform", "zipf", "stream"):
                    raise ValueError("expected 'locality uniform|zipf <s>|stream'")
                data["locality"] = args[0]
                if args[0] == "zipf":
                    if len(args) != 2:
                        raise ValueError("zipf needs a skew parameter")
                    data["zipf_s"] = float(args[1])
            elif len(args) != 1:
                raise ValueError(f"expected '{key} <value>'")
            elif key == "requests":
                data["requests"] = int(args[0], 0)
            elif key == "read_fraction":
                data["read_fraction"] = parse_decimal(args[0])
            elif key in ("size", "footprint"):
                data[key] = parse_size(args[0])
            elif key == "gap":
                data["gap"] = int(args[0], 0)
            elif key == "warmup":
                data["warmup"] = parse_bool(args[0])
            else:
                issues.append(ConfigIssue("UnknownKey", key, "unknown workload key", n))
        except (ValueError, ValidationError) as e:
            issues.append(ConfigIssue("BadValue", key, str(e).splitlines()[0], n))

    if issues:
        raise ConfigError(issues)
    try:
        return WorkloadSpec(allocs=tuple(allocs), **data)
    except ValidationError as e:
        raise ConfigError(
            ConfigIssue("BadValue", ".".join(str(x) for x in err["loc"]), err["msg"])
            for err in e.errors()
        ) from None


def load_workload(path: Union[str, Path]) -> WorkloadSpec:
    return parse_workload_text(Path(path).read_text(encoding="utf-8"))


@dataclass
class Workload:
    spec: WorkloadSpec
    pool: FramePool
    allocations: List[Allocation]
    host_pages: np.ndarray
    records: Iterator[TraceRecord] = field(repr=False, default_factory=lambda: iter(()))


def synthesize(spec: WorkloadSpec, cfg: SimConfig, seed: int = 0) -> Workload:
    """
    Allocate the footprint and build a deterministic record stream for it.
    With warm-up on, every page is touched once (in order) before the
    sampled requests, so the touched footprint equals the allocated one.
    """
    total = spec.total_bytes
    if total <= 0:
        raise ConfigError([ConfigIssue("BadValue", "footprint", "workload has no footprint")])
    if total > cfg.window_size:
        raise FootprintTooLarge(f"footprint {total} exceeds window size {cfg.window_size}")
    if not is_pow2(spec.size) or spec.size > cfg.page_size:
        raise ConfigError([ConfigIssue("BadValue", "size", f"{spec.size} must be a power of two <= page_size")])

    pool = FramePool(cfg)
    allocs = spec.allocs or (AllocSpec(name="footprint", size=total),)
    try:
        allocations = [pool.alloc(a.size, a.hint, a.name) for a in allocs]
    except OutOfMemory as e:
        raise FootprintTooLarge(str(e)) from None
    pages = np.fromiter((p for a in allocations for p in a.host_pages()), dtype=np.int64)
    log.info("workload: %d pages in %d allocations, %d requests (%s)",
             pages.size, len(allocations), spec.requests, spec.locality)
    return Workload(spec, pool, allocations, pages, _records(spec, cfg, pages, seed))


def _records(spec: WorkloadSpec, cfg: SimConfig, pages: np.ndarray, seed: int) -> Iterator[TraceRecord]:
    rng = np.random.default_rng(seed)
    ps = cfg.page_size
    base = cfg.window_base
    size = spec.size
    slots = ps // size
    rf = float(spec.read_fraction)
    n_pages = int(pages.size)

    if spec.warmup:
        for start in range(0, n_pages, _CHUNK):
            chunk = pages[start:start + _CHUNK]
            reads = rng.random(chunk.size) < rf
            for page, is_read in zip(chunk.tolist(), reads.tolist()):
                yield TraceRecord(Op.READ if is_read else Op.WRITE, base + page * ps, size, spec.gap)

    weights = None
    order = None
    if spec.locality == "zipf":
        ranks = np.arange(1, n_pages + 1, dtype=np.float64)
        weights = 1.0 / ranks ** spec.zipf_s
        weights /= weights.sum()
        order = rng.permutation(n_pages)  # hottest rank lands on a random page

    cursor = 0
    left = spec.requests
    while left > 0:
        n = min(left, _CHUNK)
        left -= n
        if spec.locality == "stream":
            idx = (cursor + np.arange(n, dtype=np.int64)) % (n_pages * slots)
            cursor = int(idx[-1]) + 1
            page_idx, slot = np.divmod(idx, slots)
        else:
            if weights is not None:
                page_idx = order[rng.choice(n_pages, size=n, p=weights)]
            else:
                page_idx = rng.integers(0, n_pages, size=n)
            slot = rng.integers(0, slots, size=n)
        addrs = base + pages[page_idx] * ps + slot * size
        reads = rng.random(n) < rf
        for addr, is_read in zip(addrs.tolist(), reads.tolist()):
            yield TraceRecord(Op.READ if is_read else Op.WRITE, addr, size, spec.gap)
