import json

import pytest

from app import cli
from app.errors import InvariantBreach
from app.trace import parse_record


@pytest.fixture
def files(tmp_path):
    (tmp_path / "small.cfg").write_text("dram.capacity = 64KB\nnvm.capacity = 256KB\n")
    (tmp_path / "ok.trace").write_text("W 0x1240000000 64\nR 0x1240000000 64\n")
    (tmp_path / "bad.trace").write_text("R 0x1240000000 64\nR 0xZZ 64\n")
    (tmp_path / "mix.wl").write_text("alloc heap 16KB dram\nrequests 20\n")
    return tmp_path


def test_validate_exit_codes(files):
    assert cli.main(["validate", "--trace", str(files / "ok.trace")]) == cli.EXIT_OK
    assert cli.main(["validate", "--trace", str(files / "bad.trace")]) == cli.EXIT_USAGE


def test_run_writes_report(files):
    out = files / "r.json"
    code = cli.main(["run", "--config", str(files / "small.cfg"), "--trace", str(files / "ok.trace"),
                     "--report", str(out), "--verify"])
    assert code == cli.EXIT_OK
    doc = json.loads(out.read_text())
    assert doc["requests"] == 2 and doc["verified"] is True
    assert doc["counters"]["dram"]["read_bytes"] == 64


def test_run_synthetic(files):
    out = files / "s.json"
    code = cli.main(["run", "--config", str(files / "small.cfg"), "--synthetic", str(files / "mix.wl"),
                     "--seed", "4", "--report", str(out)])
    assert code == cli.EXIT_OK
    doc = json.loads(out.read_text())
    assert doc["seed"] == 4 and doc["allocator"]["dram_pages"] == 4


def test_bad_config_is_usage_error(files):
    (files / "broken.cfg").write_text("page.size = 3000\ncolour = blue\n")
    code = cli.main(["run", "--config", str(files / "broken.cfg"), "--trace", str(files / "ok.trace")])
    assert code == cli.EXIT_USAGE


def test_bad_trace_during_run_is_usage_error(files):
    code = cli.main(["run", "--config", str(files / "small.cfg"), "--trace", str(files / "bad.trace")])
    assert code == cli.EXIT_USAGE


def test_invariant_breach_exit_code(files, monkeypatch):
    def boom(*a, **kw):
        raise InvariantBreach("reorder buffer lost a tag")
    monkeypatch.setattr("app.runner.run", boom)
    code = cli.main(["run", "--config", str(files / "small.cfg"), "--trace", str(files / "ok.trace")])
    assert code == cli.EXIT_BREACH


def test_synth_writes_parseable_trace(files):
    out = files / "gen.trace"
    code = cli.main(["synth", "--spec", str(files / "mix.wl"), "--config", str(files / "small.cfg"),
                     "--seed", "1", "--out", str(out)])
    assert code == cli.EXIT_OK
    lines = out.read_text().splitlines()
    assert len(lines) == 4 + 20   # warm-up sweep + requests
    assert all(parse_record(line) is not None for line in lines)
    assert cli.main(["validate", "--trace", str(out), "--config", str(files / "small.cfg")]) == cli.EXIT_OK


def test_sweep_command(files):
    (files / "plan.txt").write_text("name=a config=small.cfg trace=ok.trace\n")
    out = files / "sweep"
    assert cli.main(["sweep", "--plan", str(files / "plan.txt"), "--jobs", "1", "--out", str(out)]) == cli.EXIT_OK
    assert (out / "summary.csv").exists() and (out / "a.json").exists()


def test_calibrate(files):
    assert cli.main(["calibrate", "--config", str(files / "small.cfg"), "--samples", "50"]) == cli.EXIT_OK


def test_usage_errors():
    assert cli.main([]) == cli.EXIT_USAGE
    assert cli.main(["run", "--trace", "x"]) == cli.EXIT_USAGE
    assert cli.main(["--help"]) == cli.EXIT_OK


def test_sweep_with_missing_trace_still_writes_summary(files):
    (files / "plan.txt").write_text("name=a config=small.cfg trace=ok.trace\nname=b config=small.cfg trace=nope.trace\n")
    out = files / "sweep"
    assert cli.main(["sweep", "--plan", str(files / "plan.txt"), "--jobs", "1", "--out", str(out)]) == cli.EXIT_USAGE
    assert (out / "summary.csv").exists() and (out / "a.json").exists()


def test_sweep_breach_exit_code(files, monkeypatch):
    def boom(*a, **kw):
        raise InvariantBreach("reorder buffer lost a tag")
    monkeypatch.setattr("app.sweep.run", boom)
    (files / "plan.txt").write_text("name=a config=small.cfg trace=ok.trace\n")
    code = cli.main(["sweep", "--plan", str(files / "plan.txt"), "--jobs", "1", "--out", str(files / "sweep")])
    assert code == cli.EXIT_BREACH
