import random
from decimal import Decimal

import pytest

from app.config import PolicyConfig
from app.core import Device, MemoryRequest, Op
from app.errors import DuplicateCompletion, OutOfWindow, UnknownTag
from app.oracle import Verifier
from app.pipeline import HeaderFifo, Hmmu, ReorderBuffer
from app.core import Response

from conftest import make_cfg, scaled

PS = 4096


def _addr(cfg, page, off=0):
    return cfg.window_base + page * PS + off


def _read(cfg, page, off=0, size=64, t=0):
    return MemoryRequest(Op.READ, _addr(cfg, page, off), size, arrival=t)


def _write(cfg, page, data, off=0, t=0):
    return MemoryRequest(Op.WRITE, _addr(cfg, page, off), len(data), arrival=t, payload=data)


def test_reorder_buffer_releases_unbroken_prefix():
    rob = ReorderBuffer()
    rob.put(Response(1, Op.READ, b"", 10))
    assert rob.release() == []
    rob.put(Response(0, Op.READ, b"", 20))
    assert [r.tag for r in rob.release()] == [0, 1]
    assert rob.highwater == 2 and rob.release_cursor == 2
    with pytest.raises(DuplicateCompletion):
        rob.put(Response(1, Op.READ, b"", 30))


def test_header_fifo_is_strict():
    fifo = HeaderFifo()
    fifo.push(MemoryRequest(Op.READ, 0, 4, tag=0))
    fifo.push(MemoryRequest(Op.READ, 0, 4, tag=1))
    assert fifo.head().tag == 0 and len(fifo) == 2
    with pytest.raises(Exception):
        fifo.pop(1)
    assert fifo.pop(0).tag == 0


def test_single_read_minimal_path(small_cfg):
    h = Hmmu(small_cfg)
    tag = h.ingest(_read(small_cfg, 0))
    assert tag == 0 and len(h.fifo) == 1 == h.in_flight
    h.finish()
    out = h.drain()
    assert [r.tag for r in out] == [0]
    assert out[0].data == bytes(64)
    # dispatch at 2, DRAM round trip 50
    assert out[0].completion == 52
    assert len(h.fifo) == 0
    assert h.counters.devices[Device.DRAM].read_txns == 1


def test_slow_nvm_response_holds_back_fast_dram_one(small_cfg):
    h = Hmmu(small_cfg)
    h.table.place(0, Device.NVM)
    h.table.place(1, Device.DRAM)
    h.ingest(_read(small_cfg, 0))
    h.ingest(_read(small_cfg, 1))
    h.run_until(100)
    assert len(h.rob) == 1          # the DRAM read is done
    assert h.drain() == []
    h.finish()
    out = h.drain()
    assert [r.tag for r in out] == [0, 1]
    assert [r.completion for r in out] == [152, 52]
    assert h.counters.ooo_completions == 1
    assert h.counters.reorder_buffer_highwater == 2


def test_split_read_across_dram_and_nvm_pages(small_cfg):
    h = Hmmu(small_cfg)
    h.table.place(0, Device.DRAM)
    h.table.place(1, Device.NVM)
    a, b = bytes([1] * 64), bytes([2] * 64)
    h.ingest(_write(small_cfg, 0, a, off=PS - 64))
    h.ingest(_write(small_cfg, 1, b))
    h.ingest(_read(small_cfg, 0, off=PS - 64, size=128))
    h.finish()
    out = h.drain()
    assert [r.tag for r in out] == [0, 1, 2]
    assert out[2].data == a + b
    dram, nvm = h.counters.devices[Device.DRAM], h.counters.devices[Device.NVM]
    assert (dram.read_txns, nvm.read_txns) == (1, 1)
    assert (dram.read_bytes, nvm.read_bytes) == (64, 64)


def test_write_then_read_returns_payload(small_cfg):
    h = Hmmu(small_cfg)
    data = bytes(range(64))
    h.ingest(_write(small_cfg, 3, data, off=128))
    h.ingest(_read(small_cfg, 3, off=128, t=1))
    h.finish()
    out = h.drain()
    assert out[0].data is None and out[0].op is Op.WRITE
    assert out[1].data == data


def test_ingest_outside_window(small_cfg):
    h = Hmmu(small_cfg)
    with pytest.raises(OutOfWindow):
        h.ingest(MemoryRequest(Op.READ, small_cfg.window_end - 32, 64))
    assert len(h.fifo) == 0


def test_unknown_and_duplicate_completion(small_cfg):
    h = Hmmu(small_cfg)
    with pytest.raises(UnknownTag):
        h.complete(99, 0, None)
    h.ingest(_read(small_cfg, 0, off=PS - 32))     # two pieces
    h.run_until(2)
    h.complete(0, 0, bytes(32))
    with pytest.raises(DuplicateCompletion):
        h.complete(0, 0, bytes(32))


def test_posted_writes_answer_at_dispatch():
    cfg = make_cfg(posted_writes=True)
    h = Hmmu(cfg)
    h.ingest(_write(cfg, 0, b"\x07" * 8, t=10))
    h.ingest(_read(cfg, 0, size=8, t=10))
    h.finish()
    w, r = h.drain()
    assert w.completion == 12
    assert r.data == b"\x07" * 8
    assert h.counters.devices[Device.DRAM].write_txns == 1


def test_hot_page_migrates_while_reads_stay_consistent(hot_cfg):
    h = Hmmu(hot_cfg)
    h.table.place(20, Device.NVM)
    data = bytes([9] * 64)
    h.ingest(_write(hot_cfg, 20, data))
    for i in range(6):
        h.ingest(_read(hot_cfg, 20, t=i))
    h.finish()
    out = h.drain()
    assert [r.tag for r in out] == list(range(7))
    assert all(r.data == data for r in out[1:])
    assert h.counters.moves_completed + h.counters.swaps_completed == 1
    assert h.table.device_of(20) is Device.DRAM
    assert h.counters.stall_events >= 1


def _random_run(cfg, rng, n, pages):
    h = Hmmu(cfg)
    v = Verifier(cfg.window_base, cfg.page_size)
    t = 0
    delivered = []
    for tag in range(n):
        t += rng.choice((0, 1, 1, 2, 5))
        page = rng.randrange(pages)
        size = rng.choice((8, 64, 256))
        off = rng.randrange(0, PS // size) * size
        if rng.random() < 0.4:
            req = _write(cfg, page, bytes(rng.randrange(1, 256) for _ in range(size)), off=off, t=t)
        else:
            req = _read(cfg, page, off=off, size=size, t=t)
        h.run_until(t)
        req = MemoryRequest(req.op, req.addr, req.size, arrival=req.arrival, tag=h.ingest(req),
                            payload=req.payload)
        v.expect(req)
        out = h.drain()
        v.deliver_all(out)
        delivered += out
    h.finish()
    out = h.drain()
    v.deliver_all(out)
    delivered += out
    v.finish(h.checksum())
    return h, [r.tag for r in delivered]


def test_ordered_delivery_over_random_traces():
    rng = random.Random(7)
    cfg = make_cfg(policy=PolicyConfig(dram_watermark=Decimal("0.5")))
    runs = scaled(10_000, floor=100)
    ooo_runs = 0
    for _ in range(runs):
        h, tags = _random_run(cfg, rng, 40, pages=32)
        assert tags == list(range(40))
        ooo_runs += h.counters.ooo_completions > 0
    assert ooo_runs >= 0.3 * runs


def test_flat_memory_equivalence_with_migrations(hot_cfg):
    rng = random.Random(11)
    migrated = 0
    for _ in range(scaled(1_000, floor=40)):
        h, tags = _random_run(hot_cfg, rng, 120, pages=24)
        assert tags == list(range(120))
        migrated += h.counters.swaps_completed + h.counters.moves_completed
        h.table.check()
    assert migrated > 0
