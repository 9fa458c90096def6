import io

import pytest

from app.core import Op
from app.errors import TraceError
from app.trace import TraceRecord, parse_record, payload_for, read_trace, to_requests, validate_trace, write_trace

from conftest import make_cfg

BASE = 0x1240000000


def test_parse_record_forms():
    assert parse_record("R 0x1240000000 64") == TraceRecord(Op.READ, BASE, 64)
    rec = parse_record("w 1240000040 8 +5  # hot loop", 7)
    assert (rec.op, rec.addr, rec.size, rec.gap, rec.line) == (Op.WRITE, BASE + 0x40, 8, 5, 7)
    assert parse_record("   ") is None
    assert parse_record("# only a comment") is None


def test_validate_reports_every_bad_line():
    cfg = make_cfg()
    lines = [
        "R 0x1240000000 64",
        "R 0xZZ 64",
        "W 0x1240000000 65",
        "X 0x1240000000 4",
        "R 0x10 64",
        "R 0x1240000000",
        "R 0x1240000000 64 +oops",
    ]
    issues = validate_trace(lines, cfg)
    assert [n for n, _ in issues] == [2, 3, 4, 5, 6, 7]
    assert "hex" in issues[0][1]
    assert "power of two" in issues[1][1]


def test_validate_well_formed_file(tmp_path):
    p = tmp_path / "ok.trace"
    p.write_text("# warm\nR 0x1240000000 64\nW 0x1240001000 4096 +3\n")
    assert validate_trace(p) == []


def test_size_above_page_rejected():
    issues = validate_trace(["R 0x1240000000 8192"], make_cfg())
    assert len(issues) == 1 and "exceeds" in issues[0][1]


def test_read_trace_stops_on_first_error():
    cfg = make_cfg()
    recs = read_trace(["R 0x1240000000 64", "R 0x1240000000 3"], cfg)
    assert next(recs).size == 64
    with pytest.raises(TraceError) as ei:
        next(recs)
    assert ei.value.issues[0][0] == 2


def test_arrival_is_running_sum_of_gaps():
    recs = [TraceRecord(Op.READ, BASE, 8), TraceRecord(Op.WRITE, BASE, 8, gap=5), TraceRecord(Op.READ, BASE, 8, gap=0)]
    reqs = list(to_requests(recs, seed=1))
    assert [r.arrival for r in reqs] == [1, 6, 6]
    assert [r.tag for r in reqs] == [0, 1, 2]
    assert reqs[1].payload == payload_for(1, 8, 1)
    assert reqs[0].payload is None


def test_payloads_are_deterministic():
    assert payload_for(3, 64, 9) == payload_for(3, 64, 9)
    assert payload_for(3, 64, 9) != payload_for(4, 64, 9)
    assert payload_for(3, 64, 9) != payload_for(3, 64, 10)
    assert len(payload_for(0, 4096, 0)) == 4096


def test_write_trace_format():
    buf = io.StringIO()
    n = write_trace([TraceRecord(Op.READ, BASE, 64), TraceRecord(Op.WRITE, BASE + 64, 8, gap=4)], buf)
    assert n == 2
    assert buf.getvalue() == "R 0x1240000000 64\nW 0x1240000040 8 +4\n"
    assert [parse_record(line) for line in buf.getvalue().splitlines()][1].gap == 4
