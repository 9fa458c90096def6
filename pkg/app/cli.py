from __future__ import annotations  # must be first

import argparse
import asyncio
import logging
import sys
from typing import List, Optional

from app.logging_setup import setup_logging
from app.config import SETTINGS, load_config
from app.core import Device, Op
from app.errors import ConfigError, InvariantBreach, SimError, TraceError

log = logging.getLogger("cli")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_BREACH = 2


# -------------------- Commands --------------------

def cmd_run(args: argparse.Namespace) -> int:
    from app.runner import run, write_report
    from app.synth import load_workload

    cfg = load_config(args.config)
    log.info("config loaded from %s", args.config)
    if args.trace:
        report = run(cfg, trace=args.trace, seed=args.seed, verify=args.verify)
    else:
        report = run(cfg, workload=load_workload(args.synthetic), seed=args.seed, verify=args.verify,
                     source=args.synthetic)
    write_report(report, args.report)
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    from app.trace import validate_trace

    cfg = load_config(args.config) if args.config else None
    issues = validate_trace(args.trace, cfg)
    for line, msg in issues:
        log.error("%s:%d: %s", args.trace, line, msg)
    if issues:
        return EXIT_USAGE
    log.info("%s ok", args.trace)
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    from app.sweep import load_plan, render_summary, run_plan, write_summary

    items = load_plan(args.plan)
    log.info("sweep: %d runs, jobs=%s", len(items), args.jobs or SETTINGS.sweep_jobs)
    df = asyncio.run(run_plan(items, args.jobs, args.out))
    write_summary(df, args.out)
    render_summary(df)
    if (df["status"] == "breach").any():
        return EXIT_BREACH
    return EXIT_OK if (df["status"] == "ok").all() else EXIT_USAGE


def cmd_synth(args: argparse.Namespace) -> int:
    from app.synth import load_workload, synthesize
    from app.trace import write_trace

    cfg = load_config(args.config) if args.config else load_config(None)
    w = synthesize(load_workload(args.spec), cfg, args.seed)
    n = write_trace(w.records, args.out)
    log.info("wrote %d records to %s", n, args.out)
    return EXIT_OK


def cmd_calibrate(args: argparse.Namespace) -> int:
    from rich.console import Console
    from rich.table import Table

    from app.timing import build_device_models, measure_round_trip

    cfg = load_config(args.config)
    models = build_device_models(cfg)
    rts = {d: measure_round_trip(cfg, args.samples, d, models=models) for d in (Device.DRAM, Device.NVM)}
    table = Table(title=f"round trip over {args.samples} closed-loop requests")
    for c in ("device", "op", "base", "stall", "cycles", "ns", "vs dram"):
        table.add_column(c, justify="left" if c in ("device", "op") else "right")
    for d in (Device.DRAM, Device.NVM):
        m = models[d]
        for op in (Op.READ, Op.WRITE):
            rt = rts[d][op]
            ratio = rt / rts[Device.DRAM][op]
            table.add_row(d.value, op.name.lower(), str(m.base[op]), str(m.stall[op]),
                          f"{rt:.1f}", f"{rt * float(cfg.ns_per_cycle):.1f}", f"{ratio:.2f}")
    Console().print(table)
    return EXIT_OK


# -------------------- Entrypoint --------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hmmu-sim", description="Hybrid DRAM/NVM memory system simulator")
    sub = p.add_subparsers(dest="cmd", required=True)

    r = sub.add_parser("run", help="simulate one trace or synthetic workload")
    r.add_argument("--config", required=True)
    src = r.add_mutually_exclusive_group(required=True)
    src.add_argument("--trace")
    src.add_argument("--synthetic", help="workload spec file")
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--report", default=None, help="report path (stdout when omitted)")
    r.add_argument("--verify", action="store_true", help="check every response against a flat-memory replay")
    r.set_defaults(fn=cmd_run)

    v = sub.add_parser("validate", help="check a trace without simulating it")
    v.add_argument("--trace", required=True)
    v.add_argument("--config", default=None)
    v.set_defaults(fn=cmd_validate)

    s = sub.add_parser("sweep", help="run a plan of simulations")
    s.add_argument("--plan", required=True)
    s.add_argument("--jobs", type=int, default=None)
    s.add_argument("--out", default="sweep-out")
    s.set_defaults(fn=cmd_sweep)

    g = sub.add_parser("synth", help="write a synthetic workload as a trace file")
    g.add_argument("--spec", required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--config", default=None)
    g.add_argument("--out", required=True)
    g.set_defaults(fn=cmd_synth)

    c = sub.add_parser("calibrate", help="print measured round trips and derived stall cycles")
    c.add_argument("--config", default=None)
    c.add_argument("--samples", type=int, default=1000)
    c.set_defaults(fn=cmd_calibrate)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    setup_logging()
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE
    try:
        return args.fn(args)
    except ConfigError as e:
        for issue in e.issues:
            log.error("config: %s", issue)
        return EXIT_USAGE
    except TraceError as e:
        for line, msg in e.issues:
            log.error("trace line %d: %s", line, msg)
        return EXIT_USAGE
    except InvariantBreach as e:
        log.error("invariant breach: %s", e)
        return EXIT_BREACH
    except (SimError, OSError, ValueError) as e:
        log.error("%s", e)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
