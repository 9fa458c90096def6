from fractions import Fraction

import pytest

from app.core import Device, MemoryRequest, Op, SimTime, split_request
from app.errors import InvariantBreach
from app.events import EventQueue

BASE = 0x1240000000


def test_split_within_page_is_identity():
    req = MemoryRequest(Op.READ, BASE + 64, 64, tag=3)
    assert split_request(req, 4096) == [req]


def test_split_across_page_boundary():
    req = MemoryRequest(Op.READ, BASE + 4096 - 64, 128, tag=7)
    a, b = split_request(req, 4096)
    assert (a.addr, a.size, a.sub) == (BASE + 4096 - 64, 64, 0)
    assert (b.addr, b.size, b.sub) == (BASE + 4096, 64, 1)
    assert a.tag == b.tag == 7


def test_split_slices_write_payload():
    payload = bytes(range(128))
    req = MemoryRequest(Op.WRITE, BASE + 448, 128, payload=payload)
    parts = split_request(req, 512)
    assert [p.payload for p in parts] == [payload[:64], payload[64:]]
    assert sum(p.size for p in parts) == 128


def test_split_many_blocks():
    req = MemoryRequest(Op.READ, BASE, 4096)
    parts = split_request(req, 512)
    assert len(parts) == 8
    assert [p.sub for p in parts] == list(range(8))
    assert all(p.size == 512 for p in parts)


@pytest.mark.parametrize("kw", [
    dict(op=Op.READ, addr=BASE, size=0),
    dict(op=Op.WRITE, addr=BASE, size=4),
    dict(op=Op.READ, addr=BASE, size=4, payload=b"abcd"),
    dict(op=Op.WRITE, addr=BASE, size=4, payload=b"abc"),
])
def test_request_validation(kw):
    with pytest.raises(ValueError):
        MemoryRequest(**kw)


def test_device_other():
    assert Device.DRAM.other is Device.NVM
    assert Device.NVM.other is Device.DRAM


def test_sim_time():
    t = SimTime(10)
    assert t.ns == 40
    assert t.advance(5).cycles == 15
    assert SimTime(3, Fraction(5, 2)).ns == Fraction(15, 2)
    assert SimTime(3, Fraction(5, 2)).ns_text() == "7.5"
    assert SimTime(0).ns_text() == "0"
    with pytest.raises(ValueError):
        t.advance(-1)


def test_event_queue_orders_by_time_then_insertion():
    q = EventQueue()
    seen = []
    q.schedule(5, seen.append, "b")
    q.schedule(3, seen.append, "a")
    q.schedule(5, seen.append, "c")
    q.run()
    assert seen == ["a", "b", "c"]
    assert q.now == 5


def test_event_queue_run_until_parks_clock():
    q = EventQueue()
    seen = []
    q.schedule(10, seen.append, 1)
    q.schedule(20, seen.append, 2)
    q.run_until(15)
    assert seen == [1] and q.now == 15 and len(q) == 1
    with pytest.raises(InvariantBreach):
        q.schedule(14, seen.append, 3)
