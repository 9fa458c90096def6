from decimal import Decimal

import pytest

from app.config import MiB, load_config
from app.core import Device, Op
from app.errors import ConfigError, FootprintTooLarge
from app.middleware import AllocationHint
from app.runner import run
from app.synth import WorkloadSpec, parse_workload_text, synthesize

from conftest import make_cfg

PS = 4096


def test_parse_workload_spec():
    spec = parse_workload_text(
        "# mixed\n"
        "alloc heap 64KB dram\n"
        "alloc stream 128KB\n"
        "requests 500\n"
        "read_fraction 0.9\n"
        "locality zipf 1.2\n"
        "size 64\n"
        "gap 2\n"
        "warmup false\n"
    )
    assert [(a.name, a.size, a.hint) for a in spec.allocs] == [
        ("heap", 65536, AllocationHint.PREFER_DRAM), ("stream", 131072, AllocationHint.NO_PREFERENCE)]
    assert spec.total_bytes == 196608
    assert (spec.requests, spec.read_fraction, spec.locality, spec.zipf_s) == (500, Decimal("0.9"), "zipf", 1.2)
    assert (spec.size, spec.gap, spec.warmup) == (64, 2, False)


@pytest.mark.parametrize("text,code", [
    ("bogus 1", "UnknownKey"),
    ("locality gaussian", "BadValue"),
    ("requests 1\nrequests 2", "DuplicateKey"),
    ("read_fraction 1.5\nfootprint 4096", "BadValue"),
    ("alloc x 4KB ssd", "BadValue"),
])
def test_parse_workload_errors(text, code):
    with pytest.raises(ConfigError) as ei:
        parse_workload_text(text)
    assert code in ei.value.codes


def _records(spec, cfg=None, seed=0):
    return list(synthesize(spec, cfg or make_cfg(), seed).records)


def test_same_seed_same_stream():
    spec = WorkloadSpec(footprint=32 * PS, requests=2000, locality="zipf", zipf_s=1.1)
    assert _records(spec, seed=5) == _records(spec, seed=5)
    assert _records(spec, seed=5) != _records(spec, seed=6)


def test_read_fraction_one_means_no_writes():
    spec = WorkloadSpec(footprint=16 * PS, requests=3000, read_fraction=Decimal(1))
    assert all(r.op is Op.READ for r in _records(spec))


def test_read_fraction_within_two_percent():
    spec = WorkloadSpec(footprint=64 * PS, requests=20_000, read_fraction=Decimal("0.7"), warmup=False)
    recs = _records(spec, seed=3)
    frac = sum(r.op is Op.READ for r in recs) / len(recs)
    assert abs(frac - 0.7) <= 0.02


def test_warmup_touches_whole_footprint():
    cfg = make_cfg()
    spec = WorkloadSpec(footprint=40 * PS, requests=100, locality="stream")
    recs = _records(spec, cfg)
    pages = {(r.addr - cfg.window_base) // PS for r in recs}
    assert len(pages) * PS == 40 * PS
    assert all(r.addr + r.size <= cfg.window_end for r in recs)


def test_stream_locality_is_sequential():
    cfg = make_cfg()
    spec = WorkloadSpec(footprint=2 * PS, requests=200, locality="stream", size=512, warmup=False)
    recs = _records(spec, cfg)
    offs = [r.addr - cfg.window_base for r in recs]
    assert offs[:10] == [i * 512 for i in range(10)]
    assert offs[16] == 0   # wraps after 2 pages


def test_footprint_larger_than_window():
    cfg = make_cfg()
    with pytest.raises(FootprintTooLarge):
        synthesize(WorkloadSpec(footprint=cfg.window_size + PS), cfg)


def test_hinted_allocs_seed_placement():
    cfg = make_cfg()
    spec = parse_workload_text("alloc cold 8KB nvm\nalloc hot 8KB dram\nrequests 50\n")
    report = run(cfg, workload=spec, seed=1, verify=True)
    assert report.allocator.nvm_pages == 2 and report.allocator.dram_pages == 2
    assert report.mapped_pages == {"dram": 2, "nvm": 2}
    assert report.verified


def test_large_footprint_spills_to_nvm():
    # 602 MiB against 128 MiB DRAM / 1 GiB NVM, first touch, sampled requests
    cfg = load_config(None)
    spec = WorkloadSpec(footprint=602 * MiB, requests=1000, read_fraction=Decimal(1), size=64)
    report = run(cfg, workload=spec, seed=0)
    assert report.mapped_pages["nvm"] > 0
    mapped = (report.mapped_pages["dram"] + report.mapped_pages["nvm"]) * cfg.page_size
    assert 602 * MiB <= mapped < 602 * MiB + cfg.page_size
    assert report.counters.device(Device.NVM).read_txns > 0
