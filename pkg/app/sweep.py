# app/sweep.py
# Batch mode: one simulation per plan line, run in worker processes, with a
# pandas summary (CSV) and a rich console table.
from __future__ import annotations

import asyncio
import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import pandas as pd
from pydantic import BaseModel, ConfigDict, ValidationError, model_validator

from app.config import SETTINGS, load_config
from app.errors import ConfigError, ConfigIssue, InvariantBreach, SimError
from app.synth import load_workload
from app.runner import run, write_report

log = logging.getLogger("sweep")

SUMMARY_COLUMNS = [
    "name", "status", "requests", "run_cycles", "dram_read_bytes", "dram_write_bytes",
    "nvm_read_bytes", "nvm_write_bytes", "dma_blocks_moved", "swaps_completed",
    "stall_events", "ooo_completions", "checksum", "report", "error",
]


class SweepItem(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    config: Optional[str] = None
    trace: Optional[str] = None
    synthetic: Optional[str] = None
    seed: Optional[int] = None
    report: Optional[str] = None

    @model_validator(mode="after")
    def _one_source(self) -> "SweepItem":
        if (self.trace is None) == (self.synthetic is None):
            raise ValueError("exactly one of trace= or synthetic= is required")
        return self


def parse_plan_text(text: str, base_dir: Union[str, Path, None] = None) -> List[SweepItem]:
    """`key=value` tokens per line; relative paths resolve against base_dir."""
    base = Path(base_dir) if base_dir is not None else None
    items: List[SweepItem] = []
    issues: List[ConfigIssue] = []
    names: Dict[str, int] = {}
    for n, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if not body:
            continue
        fields: Dict[str, Any] = {}
        bad = False
        for tok in body.split():
            key, sep, value = tok.partition("=")
            if not sep or key not in SweepItem.model_fields or key in fields:
                issues.append(ConfigIssue("BadLine", tok, "expected unique key=value tokens", n))
                bad = True
                break
            if key in ("config", "trace", "synthetic", "report") and base is not None and not Path(value).is_absolute():
                value = str(base / value)
            fields[key] = value
        if bad:
            continue
        fields.setdefault("name", f"run{len(items)}")
        if fields["name"] in names:
            issues.append(ConfigIssue("DuplicateKey", fields["name"], f"name already used on line {names[fields['name']]}", n))
            continue
        try:
            items.append(SweepItem.model_validate(fields))
        except ValidationError as e:
            issues.append(ConfigIssue("BadValue", fields["name"], e.errors()[0]["msg"], n))
            continue
        names[fields["name"]] = n
    if issues:
        raise ConfigError(issues)
    return items


def load_plan(path: Union[str, Path]) -> List[SweepItem]:
    p = Path(path)
    return parse_plan_text(p.read_text(encoding="utf-8"), p.parent)


def run_item(item: Dict[str, Any], out_dir: str) -> Dict[str, Any]:
    """Worker body; takes and returns plain dicts so it crosses process boundaries."""
    it = SweepItem.model_validate(item)
    row: Dict[str, Any] = {c: None for c in SUMMARY_COLUMNS}
    row["name"] = it.name
    try:
        cfg = load_config(it.config)
        if it.trace is not None:
            report = run(cfg, trace=it.trace, seed=it.seed, source=it.name)
        else:
            report = run(cfg, workload=load_workload(it.synthetic), seed=it.seed, source=it.name)
        dest = it.report or str(Path(out_dir) / f"{it.name}.json")
        write_report(report, dest)
    except InvariantBreach as e:
        log.error("%s: invariant breach: %s", it.name, e)
        row.update(status="breach", error=str(e))
        return row
    except (SimError, OSError) as e:
        log.error("%s failed: %s", it.name, e)
        row.update(status="error", error=str(e))
        return row
    c = report.counters
    row.update(
        status="ok", requests=report.requests, run_cycles=report.run_cycles,
        dram_read_bytes=c.dram.read_bytes, dram_write_bytes=c.dram.write_bytes,
        nvm_read_bytes=c.nvm.read_bytes, nvm_write_bytes=c.nvm.write_bytes,
        dma_blocks_moved=c.dma_blocks_moved, swaps_completed=c.swaps_completed,
        stall_events=c.stall_events, ooo_completions=c.ooo_completions,
        checksum=report.checksum, report=dest, error="",
    )
    return row


async def run_plan(items: List[SweepItem], jobs: Optional[int] = None,
                   out_dir: Union[str, Path] = "sweep-out") -> pd.DataFrame:
    """Run every item with at most `jobs` in flight; rows come back in plan order."""
    jobs = max(1, jobs or SETTINGS.sweep_jobs)
    out = str(out_dir)
    Path(out).mkdir(parents=True, exist_ok=True)
    if jobs == 1:
        rows = []
        for i, it in enumerate(items, start=1):
            rows.append(run_item(it.model_dump(), out))
            log.info("sweep %d/%d: %s %s", i, len(items), it.name, rows[-1]["status"])
        return pd.DataFrame(rows, columns=SUMMARY_COLUMNS)

    loop = asyncio.get_running_loop()
    sem = asyncio.Semaphore(jobs)
    done = 0
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        async def worker(it: SweepItem) -> Dict[str, Any]:
            nonlocal done
            async with sem:
                row = await loop.run_in_executor(pool, run_item, it.model_dump(), out)
            done += 1
            log.info("sweep %d/%d: %s %s", done, len(items), it.name, row["status"])
            return row
        rows = await asyncio.gather(*[worker(it) for it in items])
    return pd.DataFrame(list(rows), columns=SUMMARY_COLUMNS)


def write_summary(df: pd.DataFrame, out_dir: Union[str, Path]) -> Path:
    path = Path(out_dir) / "summary.csv"
    df.to_csv(path, index=False)
    log.info("summary written to %s", path)
    return path


def render_summary(df: pd.DataFrame) -> None:
    from rich.console import Console
    from rich.table import Table

    table = Table(title="sweep summary")
    cols = ["name", "status", "requests", "run_cycles", "nvm_write_bytes", "swaps_completed", "stall_events"]
    for c in cols:
        table.add_column(c, justify="left" if c in ("name", "status") else "right")
    for rec in df[cols].itertuples(index=False):
        table.add_row(*("" if pd.isna(v) else str(v) for v in rec))
    Console().print(table)
