import asyncio
import json

import pandas as pd
import pytest

from app.errors import ConfigError, InvariantBreach
from app.sweep import SUMMARY_COLUMNS, SweepItem, load_plan, parse_plan_text, run_plan, write_summary

SMALL = "dram.capacity = 64KB\nnvm.capacity = 256KB\n"


@pytest.fixture
def plan_dir(tmp_path):
    (tmp_path / "small.cfg").write_text(SMALL)
    (tmp_path / "hot.cfg").write_text(SMALL + "policy = hotness\npolicy.threshold = 2\n")
    (tmp_path / "a.trace").write_text("W 0x1240000000 64\nR 0x1240000000 64\nR 0x1240030000 64 +4\n")
    (tmp_path / "broken.trace").write_text("R 0x1240000000 64\nR 0x1240000000 3\n")
    (tmp_path / "mix.wl").write_text("alloc heap 32KB dram\nalloc cold 64KB nvm\nrequests 200\nlocality zipf 1.2\n")
    return tmp_path


def test_parse_plan_resolves_relative_paths(plan_dir):
    items = parse_plan_text(
        "# baseline\n"
        "name=base config=small.cfg trace=a.trace\n"
        "config=hot.cfg synthetic=mix.wl seed=3\n",
        plan_dir,
    )
    assert [i.name for i in items] == ["base", "run1"]
    assert items[0].trace == str(plan_dir / "a.trace")
    assert items[1].seed == 3 and items[1].trace is None


@pytest.mark.parametrize("text,code", [
    ("name=a trace", "BadLine"),
    ("name=a color=red trace=x", "BadLine"),
    ("name=a trace=x synthetic=y", "BadValue"),
    ("name=a config=c", "BadValue"),
    ("name=a trace=x\nname=a trace=y", "DuplicateKey"),
])
def test_parse_plan_errors(text, code):
    with pytest.raises(ConfigError) as ei:
        parse_plan_text(text)
    assert code in ei.value.codes


def test_run_plan_in_order_with_summary(plan_dir):
    (plan_dir / "plan.txt").write_text(
        "name=base config=small.cfg trace=a.trace\n"
        "name=hot config=hot.cfg synthetic=mix.wl seed=3\n"
        "name=bad config=small.cfg trace=broken.trace\n"
    )
    items = load_plan(plan_dir / "plan.txt")
    out = plan_dir / "out"
    df = asyncio.run(run_plan(items, 1, out))

    assert list(df.columns) == SUMMARY_COLUMNS
    assert df["name"].tolist() == ["base", "hot", "bad"]
    assert df["status"].tolist() == ["ok", "ok", "error"]
    base = df.iloc[0]
    assert base["requests"] == 3 and base["dram_write_bytes"] == 64 and base["dram_read_bytes"] == 128
    assert df.iloc[2]["error"].startswith("line 2:")

    report = json.loads((out / "base.json").read_text())
    assert report["source"] == "base" and report["requests"] == 3
    assert not (out / "bad.json").exists()

    path = write_summary(df, out)
    back = pd.read_csv(path)
    assert back["name"].tolist() == ["base", "hot", "bad"]


def test_sweep_rows_match_direct_runs(plan_dir):
    items = [SweepItem(name="x", config=str(plan_dir / "small.cfg"), trace=str(plan_dir / "a.trace"))]
    a = asyncio.run(run_plan(items, 1, plan_dir / "o1"))
    b = asyncio.run(run_plan(items, 1, plan_dir / "o2"))
    assert a.drop(columns=["report"]).equals(b.drop(columns=["report"]))


def test_missing_file_is_an_error_row(plan_dir):
    items = parse_plan_text(
        "name=good config=small.cfg trace=a.trace\n"
        "name=gone config=small.cfg trace=nope.trace\n"
        "name=nocfg config=missing.cfg trace=a.trace\n",
        plan_dir,
    )
    df = asyncio.run(run_plan(items, 1, plan_dir / "out"))
    assert df["status"].tolist() == ["ok", "error", "error"]
    assert "nope.trace" in df.iloc[1]["error"]


def test_invariant_breach_gets_its_own_status(plan_dir, monkeypatch):
    def boom(*a, **kw):
        raise InvariantBreach("header FIFO out of step")
    monkeypatch.setattr("app.sweep.run", boom)
    items = [SweepItem(name="x", config=str(plan_dir / "small.cfg"), trace=str(plan_dir / "a.trace"))]
    df = asyncio.run(run_plan(items, 1, plan_dir / "out"))
    assert df["status"].tolist() == ["breach"]
    assert "header FIFO" in df.iloc[0]["error"]


def test_worker_pool_keeps_plan_order(plan_dir):
    names = [f"r{i}" for i in range(5)]
    text = "".join(
        f"name={n} config=small.cfg " + ("synthetic=mix.wl seed=%d\n" % i if i % 2 else "trace=a.trace\n")
        for i, n in enumerate(names)
    )
    items = parse_plan_text(text + "name=bad config=small.cfg trace=broken.trace\n", plan_dir)
    pooled = asyncio.run(run_plan(items, 2, plan_dir / "pooled"))
    serial = asyncio.run(run_plan(items, 1, plan_dir / "serial"))
    assert pooled["name"].tolist() == names + ["bad"]
    assert pooled["status"].tolist() == ["ok"] * 5 + ["error"]
    assert pooled.drop(columns=["report"]).equals(serial.drop(columns=["report"]))
    assert all((plan_dir / "pooled" / f"{n}.json").exists() for n in names)
