from __future__ import annotations

import os
import re
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Any, Callable, Dict, List, Literal, Optional, Tuple, Union

from dotenv import find_dotenv, load_dotenv
from pydantic import BaseModel, ConfigDict, ValidationError

from app.core import is_pow2
from app.errors import ConfigError, ConfigIssue


# .env is for local runs only; real env vars win.
load_dotenv(dotenv_path=find_dotenv(usecwd=True), override=False)


class Settings:
    """Process-level knobs read from the environment."""

    def __init__(self) -> None:
        self.log_level = (os.getenv("LOG_LEVEL", "INFO") or "INFO").strip().upper()
        self.sweep_jobs = _env_int("HMSIM_SWEEP_JOBS", 1)
        self.report_indent = _env_int("HMSIM_REPORT_INDENT", 2)
        self.perf_warn_rps = _env_int("HMSIM_PERF_WARN_RPS", 1_000_000)


def _env_int(name: str, default: int) -> int:
    try:
        return int((os.getenv(name, "") or "").strip() or default)
    except ValueError:
        return default


SETTINGS = Settings()  # consumed by CLI/runner

KiB = 1024
MiB = 1024 * KiB
GiB = 1024 * MiB

# 3D XPoint: read 50-150ns, write 50-500ns; DRAM 50ns.
DRAM_NS = Decimal(50)
XPOINT_READ_NS = (Decimal(50), Decimal(150))
XPOINT_WRITE_NS = (Decimal(50), Decimal(500))


# -------------------- Models --------------------

class DeviceTimingConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    base_read_cycles: int = 20
    base_write_cycles: int = 20
    target_read_ns: Decimal = DRAM_NS
    target_write_ns: Decimal = DRAM_NS
    base_ns: Decimal = DRAM_NS
    outstanding_slots: int = 4


class PolicyConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: Literal["static", "hotness"] = "static"
    epoch_cycles: int = 100_000
    threshold: int = 32
    dram_watermark: Decimal = Decimal("0.9")
    first_touch: bool = True


class EnergyCoeffs(BaseModel):
    """nJ per byte; None means 'not configured'."""
    model_config = ConfigDict(frozen=True)

    read_nj_per_byte: Optional[Decimal] = None
    write_nj_per_byte: Optional[Decimal] = None


class SimConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    window_base: int = 0x1240000000
    dram_capacity: int = 128 * MiB
    nvm_capacity: int = 1 * GiB
    page_size: int = 4 * KiB
    dma_block: int = 512
    dma_buffer_blocks: int = 2
    dma_max_jobs: int = 1
    dma_max_pending: int = 16
    link_latency: int = 30
    ns_per_cycle: Decimal = Decimal(4)
    control_cycles: int = 2
    posted_writes: bool = False
    stall_basis: Literal["round_trip", "device"] = "round_trip"
    nvm_bound: Literal["upper", "lower"] = "upper"
    dram: DeviceTimingConfig = DeviceTimingConfig()
    nvm: DeviceTimingConfig = DeviceTimingConfig(
        target_read_ns=XPOINT_READ_NS[1], target_write_ns=XPOINT_WRITE_NS[1]
    )
    policy: PolicyConfig = PolicyConfig()
    energy_dram: EnergyCoeffs = EnergyCoeffs()
    energy_nvm: EnergyCoeffs = EnergyCoeffs()
    report_energy: bool = False
    seed: int = 0

    @property
    def window_size(self) -> int:
        return self.dram_capacity + self.nvm_capacity

    @property
    def window_end(self) -> int:
        return self.window_base + self.window_size

    @property
    def blocks_per_page(self) -> int:
        return self.page_size // self.dma_block


# -------------------- Validation --------------------

def validate_config(cfg: SimConfig) -> SimConfig:
    """Return cfg unchanged, or raise ConfigError naming every violated constraint."""
    issues: List[ConfigIssue] = []

    def bad(code: str, field: str, msg: str) -> None:
        issues.append(ConfigIssue(code, field, msg))

    if cfg.page_size <= 0 or not is_pow2(cfg.page_size):
        bad("PageSizeNotPowerOfTwo", "page_size", f"{cfg.page_size} is not a power of two")
    if cfg.dma_block <= 0 or cfg.page_size <= 0 or cfg.page_size % cfg.dma_block:
        bad("BlockNotDividingPage", "dma_block", f"{cfg.dma_block} does not divide page_size {cfg.page_size}")
    for field in ("dram_capacity", "nvm_capacity"):
        cap = getattr(cfg, field)
        if cap <= 0:
            bad("ZeroCapacity", field, "capacity must be > 0")
        elif cfg.page_size > 0 and cap % cfg.page_size:
            bad("CapacityNotPageMultiple", field, f"{cap} is not a multiple of page_size {cfg.page_size}")

    for dev in ("dram", "nvm"):
        t: DeviceTimingConfig = getattr(cfg, dev)
        for f in ("base_read_cycles", "base_write_cycles", "target_read_ns", "target_write_ns", "base_ns"):
            if getattr(t, f) <= 0:
                bad("NonPositiveLatency", f"{dev}.{f}", "latency must be > 0")
        if t.outstanding_slots < 1:
            bad("ZeroSlots", f"{dev}.outstanding_slots", "need at least one slot")
    if cfg.link_latency < 0:
        bad("NonPositiveLatency", "link_latency", "link latency must be >= 0")
    if cfg.ns_per_cycle <= 0:
        bad("BadValue", "ns_per_cycle", "must be > 0")
    if cfg.control_cycles < 0:
        bad("BadValue", "control_cycles", "must be >= 0")
    if cfg.window_base < 0:
        bad("BadValue", "window_base", "must be >= 0")
    elif cfg.page_size > 0 and cfg.window_base % cfg.page_size:
        bad("WindowNotPageAligned", "window_base", f"{cfg.window_base:#x} is not page aligned")
    if cfg.dma_buffer_blocks < 1:
        bad("BadValue", "dma_buffer_blocks", "must be >= 1")
    if cfg.dma_max_jobs < 1:
        bad("BadValue", "dma_max_jobs", "must be >= 1")
    if cfg.dma_max_pending < 0:
        bad("BadValue", "dma_max_pending", "must be >= 0")

    p = cfg.policy
    if p.epoch_cycles < 1:
        bad("BadValue", "policy.epoch_cycles", "must be >= 1")
    if p.threshold < 1:
        bad("BadValue", "policy.threshold", "must be >= 1")
    if not (0 <= p.dram_watermark <= 1):
        bad("BadValue", "policy.dram_watermark", "must be within [0, 1]")

    for dev in ("dram", "nvm"):
        e: EnergyCoeffs = getattr(cfg, f"energy_{dev}")
        for f in ("read_nj_per_byte", "write_nj_per_byte"):
            v = getattr(e, f)
            if v is None:
                if cfg.report_energy:
                    bad("MissingEnergyCoefficient", f"energy.{dev}.{f}",
                        "energy reporting requested but coefficient not configured")
                continue
            if v < 0:
                bad("BadValue", f"energy.{dev}.{f}", "coefficient must be >= 0")
            elif (v * 1000) != (v * 1000).to_integral_value():
                bad("BadValue", f"energy.{dev}.{f}", "resolution is 0.001 nJ (1 pJ)")

    if issues:
        raise ConfigError(issues)
    return cfg


# -------------------- File loading --------------------

_SIZE_RE = re.compile(r"^\s*(0x[0-9a-fA-F]+|\d+)\s*([KMG]i?B)?\s*$", re.IGNORECASE)
_UNITS = {"kb": KiB, "kib": KiB, "mb": MiB, "mib": MiB, "gb": GiB, "gib": GiB}


def parse_size(s: str) -> int:
    """'128MB' -> 134217728; '0x1000' -> 4096; units are powers of 1024."""
    m = _SIZE_RE.match(s)
    if not m:
        raise ValueError(f"bad size {s!r}")
    n = int(m.group(1), 0)
    unit = m.group(2)
    return n * _UNITS[unit.lower()] if unit else n


def parse_int(s: str) -> int:
    try:
        return int(s.strip(), 0)
    except ValueError:
        raise ValueError(f"bad integer {s!r}") from None


def parse_decimal(s: str) -> Decimal:
    try:
        return Decimal(s.strip())
    except InvalidOperation:
        raise ValueError(f"bad number {s!r}") from None


def parse_bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"bad boolean {s!r}")


def _choice(*opts: str) -> Callable[[str], str]:
    def parse(s: str) -> str:
        v = s.strip().lower()
        if v not in opts:
            raise ValueError(f"expected one of {'|'.join(opts)}, got {s!r}")
        return v
    return parse


# key -> (path into the model dict, parser)
_Path = Tuple[str, ...]
KEYS: Dict[str, Tuple[Union[_Path, Tuple[_Path, ...]], Callable[[str], Any]]] = {
    "window.base": (("window_base",), parse_int),
    "dram.capacity": (("dram_capacity",), parse_size),
    "nvm.capacity": (("nvm_capacity",), parse_size),
    "page.size": (("page_size",), parse_size),
    "dma.block_bytes": (("dma_block",), parse_size),
    "dma.buffer_blocks": (("dma_buffer_blocks",), parse_int),
    "dma.max_jobs": (("dma_max_jobs",), parse_int),
    "dma.max_pending": (("dma_max_pending",), parse_int),
    "link.latency_cycles": (("link_latency",), parse_int),
    "clock.ns_per_cycle": (("ns_per_cycle",), parse_decimal),
    "pipeline.control_cycles": (("control_cycles",), parse_int),
    "pipeline.posted_writes": (("posted_writes",), parse_bool),
    "device.outstanding_slots": ((("dram", "outstanding_slots"), ("nvm", "outstanding_slots")), parse_int),
    "timing.base_read_cycles": ((("dram", "base_read_cycles"), ("nvm", "base_read_cycles")), parse_int),
    "timing.base_write_cycles": ((("dram", "base_write_cycles"), ("nvm", "base_write_cycles")), parse_int),
    "timing.base_ns": ((("dram", "base_ns"), ("nvm", "base_ns")), parse_decimal),
    "timing.stall_basis": (("stall_basis",), _choice("round_trip", "device")),
    "dram.read_ns": (("dram", "target_read_ns"), parse_decimal),
    "dram.write_ns": (("dram", "target_write_ns"), parse_decimal),
    "nvm.read_ns": (("nvm", "target_read_ns"), parse_decimal),
    "nvm.write_ns": (("nvm", "target_write_ns"), parse_decimal),
    "nvm.bound": (("nvm_bound",), _choice("upper", "lower")),
    "policy": (("policy", "name"), _choice("static", "hotness")),
    "policy.epoch_cycles": (("policy", "epoch_cycles"), parse_int),
    "policy.threshold": (("policy", "threshold"), parse_int),
    "policy.dram_watermark": (("policy", "dram_watermark"), parse_decimal),
    "policy.first_touch": (("policy", "first_touch"), parse_bool),
    "energy.dram.read_nj_per_byte": (("energy_dram", "read_nj_per_byte"), parse_decimal),
    "energy.dram.write_nj_per_byte": (("energy_dram", "write_nj_per_byte"), parse_decimal),
    "energy.nvm.read_nj_per_byte": (("energy_nvm", "read_nj_per_byte"), parse_decimal),
    "energy.nvm.write_nj_per_byte": (("energy_nvm", "write_nj_per_byte"), parse_decimal),
    "report.energy": (("report_energy",), parse_bool),
    "seed": (("seed",), parse_int),
}


def _paths(spec: Any) -> Tuple[_Path, ...]:
    return spec if isinstance(spec[0], tuple) else (spec,)


def parse_config_text(text: str) -> SimConfig:
    """Parse `key = value` lines (# comments). Every error is collected with its line."""
    issues: List[ConfigIssue] = []
    data: Dict[str, Any] = {}
    key_lines: Dict[str, int] = {}

    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            issues.append(ConfigIssue("BadLine", line, "expected 'key = value'", n))
            continue
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KEYS:
            issues.append(ConfigIssue("UnknownKey", key, "unknown configuration key", n))
            continue
        if key in key_lines:
            issues.append(ConfigIssue("DuplicateKey", key, f"already set on line {key_lines[key]}", n))
            continue
        key_lines[key] = n
        spec, parser = KEYS[key]
        try:
            parsed = parser(value)
        except ValueError as e:
            issues.append(ConfigIssue("BadValue", key, str(e), n))
            continue
        for path in _paths(spec):
            cur = data
            for p in path[:-1]:
                cur = cur.setdefault(p, {})
            cur[path[-1]] = parsed

    if issues:
        raise ConfigError(issues)

    # 3D XPoint bound for NVM latencies not given explicitly
    upper = data.get("nvm_bound", "upper") == "upper"
    nvm = data.setdefault("nvm", {})
    nvm.setdefault("target_read_ns", XPOINT_READ_NS[1] if upper else XPOINT_READ_NS[0])
    nvm.setdefault("target_write_ns", XPOINT_WRITE_NS[1] if upper else XPOINT_WRITE_NS[0])

    try:
        cfg = SimConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(
            ConfigIssue("BadValue", ".".join(str(x) for x in err["loc"]), err["msg"])
            for err in e.errors()
        ) from None
    return validate_config(cfg)


def load_config(path: Union[str, Path, None]) -> SimConfig:
    if path is None:
        return validate_config(SimConfig())
    return parse_config_text(Path(path).read_text(encoding="utf-8"))


def config_echo(cfg: SimConfig) -> Dict[str, Any]:
    """JSON-safe, key-stable echo of a config for reports."""
    return cfg.model_dump(mode="json")
