# app/trace.py
# Line-oriented request traces: `R|W <hex addr> <size> [+gap]`, `#` comments.
from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, List, Optional, TextIO, Tuple, Union

from app.config import SimConfig
from app.core import MAX_REQUEST_BYTES, MemoryRequest, Op, is_pow2
from app.errors import TraceError

log = logging.getLogger("trace")

_OPS = {"R": Op.READ, "W": Op.WRITE}


@dataclass(frozen=True, slots=True)
class TraceRecord:
    op: Op
    addr: int
    size: int
    gap: int = 1
    line: int = 0

    def format(self) -> str:
        s = f"{self.op.value} {self.addr:#x} {self.size}"
        return s if self.gap == 1 else f"{s} +{self.gap}"


def parse_record(text: str, line: int = 0) -> Optional[TraceRecord]:
    """One trace line -> record; None for blank/comment lines. Raises ValueError."""
    body = text.split("#", 1)[0].strip()
    if not body:
        return None
    parts = body.split()
    if len(parts) not in (3, 4):
        raise ValueError(f"expected 'R|W <hex addr> <size> [+gap]', got {len(parts)} fields")
    op = _OPS.get(parts[0].upper())
    if op is None:
        raise ValueError(f"unknown op {parts[0]!r}")
    try:
        addr = int(parts[1], 16)
    except ValueError:
        raise ValueError(f"bad hex address {parts[1]!r}") from None
    try:
        size = int(parts[2], 0)
    except ValueError:
        raise ValueError(f"bad size {parts[2]!r}") from None
    gap = 1
    if len(parts) == 4:
        try:
            gap = int(parts[3].lstrip("+"), 0)
        except ValueError:
            raise ValueError(f"bad gap {parts[3]!r}") from None
        if gap < 0:
            raise ValueError("gap must be >= 0")
    return TraceRecord(op, addr, size, gap, line)


def check_record(rec: TraceRecord, cfg: SimConfig) -> List[str]:
    errs: List[str] = []
    if not is_pow2(rec.size):
        errs.append(f"size {rec.size} is not a power of two")
    elif rec.size > min(cfg.page_size, MAX_REQUEST_BYTES):
        errs.append(f"size {rec.size} exceeds {min(cfg.page_size, MAX_REQUEST_BYTES)}")
    if not (cfg.window_base <= rec.addr and rec.addr + rec.size <= cfg.window_end):
        errs.append(f"address {rec.addr:#x}+{rec.size} outside window "
                    f"[{cfg.window_base:#x}, {cfg.window_end:#x})")
    return errs


def _lines(source: Union[str, Path, TextIO, Iterable[str]]) -> Iterator[str]:
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            yield from fh
    else:
        yield from source


def validate_trace(source: Union[str, Path, TextIO, Iterable[str]],
                   cfg: Optional[SimConfig] = None) -> List[Tuple[int, str]]:
    """Every (line, error) in the trace; an empty list means it is well formed."""
    cfg = cfg or SimConfig()
    issues: List[Tuple[int, str]] = []
    for n, text in enumerate(_lines(source), start=1):
        try:
            rec = parse_record(text, n)
        except ValueError as e:
            issues.append((n, str(e)))
            continue
        if rec is not None:
            issues.extend((n, msg) for msg in check_record(rec, cfg))
    return issues


def read_trace(source: Union[str, Path, TextIO, Iterable[str]], cfg: SimConfig) -> Iterator[TraceRecord]:
    """Stream records; the first bad line raises TraceError."""
    for n, text in enumerate(_lines(source), start=1):
        try:
            rec = parse_record(text, n)
        except ValueError as e:
            raise TraceError([(n, str(e))]) from None
        if rec is None:
            continue
        errs = check_record(rec, cfg)
        if errs:
            raise TraceError([(n, m) for m in errs])
        yield rec


def write_trace(records: Iterable[TraceRecord], out: Union[str, Path, TextIO]) -> int:
    n = 0
    if isinstance(out, (str, Path)):
        with open(out, "w", encoding="utf-8") as fh:
            return write_trace(records, fh)
    for rec in records:
        out.write(rec.format())
        out.write("\n")
        n += 1
    return n


def payload_for(tag: int, size: int, seed: int) -> bytes:
    """Deterministic write data for a trace request."""
    return hashlib.shake_128(f"{seed}:{tag}".encode()).digest(size)


def to_requests(records: Iterable[TraceRecord], seed: int) -> Iterator[MemoryRequest]:
    """Records -> requests; arrival is the running sum of gaps, tags count from 0."""
    t = 0
    for tag, rec in enumerate(records):
        t += rec.gap
        payload = payload_for(tag, rec.size, seed) if rec.op is Op.WRITE else None
        yield MemoryRequest(rec.op, rec.addr, rec.size, arrival=t, tag=tag, payload=payload)
