from __future__ import annotations

import csv
import json

import pytest

from snapsim import cli
from snapsim.engine import default_config
from snapsim.report import (
    PLOT_HEADER,
    REQUEST_HEADER,
    STARTUP_HEADER,
    InsufficientData,
    cmd_analyze,
    cmd_compare,
    cmd_simulate,
    emit_plot_data,
    load_tables,
    summary_document,
)


def small(**kw):
    kw.setdefault("runs", 6)
    kw.setdefault("requests_per_run", 5)
    kw.setdefault("analysis", default_config().analysis.__class__(resamples=500))
    return default_config(**kw)


def rows(path):
    with path.open(newline="") as f:
        return list(csv.reader(f))


@pytest.fixture()
def bundle(tmp_path):
    cmd_simulate(small(), tmp_path)
    cmd_analyze(tmp_path)
    return tmp_path


def test_headers(bundle):
    assert tuple(rows(bundle / "startup.csv")[0]) == STARTUP_HEADER
    assert tuple(rows(bundle / "requests.csv")[0]) == REQUEST_HEADER
    assert tuple(rows(bundle / "startup_plot.csv")[0]) == PLOT_HEADER


def test_row_conservation(bundle):
    startup = rows(bundle / "startup.csv")[1:]
    requests = rows(bundle / "requests.csv")[1:]
    assert len(startup) == 6 * 6
    ok = [r for r in startup if r[5] == "false"]
    assert len(requests) == 5 * len(ok)
    failed = {(r[0], r[1]) for r in startup if r[5] == "true"}
    assert not any((r[0], r[1]) in failed for r in requests)
    assert {r[0] for r in startup if r[5] == "true"} == {"big/seuss"}


def test_milliseconds_have_three_decimals(bundle):
    for r in rows(bundle / "requests.csv")[1:20]:
        assert len(r[4].split(".")[1]) == 3


def test_manifest(bundle):
    m = json.loads((bundle / "manifest.json").read_text())
    assert m["seed"] == 42 and m["tool"] == "snapsim"
    assert set(m["tables"]) == {"startup.csv", "requests.csv"}


def test_simulate_is_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    cmd_simulate(small(), a)
    cmd_simulate(small(), b)
    for name in ("startup.csv", "requests.csv", "manifest.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_analyze_outputs(bundle):
    summary = json.loads((bundle / "summary.json").read_text())
    big = summary["groups"]["big/seuss"]
    assert big["startup"] == {"status": "no data"}
    assert big["service"]["cold"] == {"status": "no data"}
    assert list(summary["groups"]) == sorted(summary["groups"])
    noop = summary["groups"]["noop/prebaking"]["startup"]
    assert noop["ci_low_ms"] <= noop["median_ms"] <= noop["ci_high_ms"]
    comps = json.loads((bundle / "comparisons.json").read_text())["comparisons"]
    assert [(c["group_a"], c["status"]) for c in comps] == [
        ("big/seuss", "no data"), ("markdown/seuss", "ok"), ("noop/seuss", "ok")]


def test_analyze_is_byte_identical(bundle):
    before = {p.name: p.read_bytes() for p in bundle.iterdir()}
    cmd_analyze(bundle)
    assert before == {p.name: p.read_bytes() for p in bundle.iterdir()}


def test_plot_data(bundle):
    plot = list(csv.DictReader((bundle / "startup_plot.csv").open(newline="")))
    whiskers = [r["group"] for r in plot if r["kind"] == "median"]
    assert whiskers == ["big/prebaking", "markdown/prebaking", "markdown/seuss",
                        "noop/prebaking", "noop/seuss"]
    service = list(csv.DictReader((bundle / "service_plot.csv").open(newline="")))
    assert sum(r["kind"] == "median" for r in service) == 10
    assert {r["scenario"] for r in service} == {"cold", "hot"}
    tables = load_tables(bundle)
    before = (bundle / "service_plot.csv").read_bytes()
    emit_plot_data(summary_document(tables), tables, bundle)
    assert (bundle / "service_plot.csv").read_bytes() == before


def test_compare(bundle):
    rep = cmd_compare(bundle, "noop/seuss", "noop/prebaking")
    assert rep["p_value"] < 0.05
    assert rep["diff_ci_low"] > 0
    with pytest.raises(InsufficientData, match="big/seuss"):
        cmd_compare(bundle, "big/seuss", "big/prebaking")


def test_compare_identical_groups(tmp_path):
    cmd_simulate(small(), tmp_path)
    rep = cmd_compare(tmp_path, "noop/prebaking", "noop/prebaking")
    assert rep["p_value"] == 1.0
    assert rep["pct_low"] <= 0 <= rep["pct_high"]


def test_cli_roundtrip(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"runs": 4, "requests_per_run": 3, "profiles": ["noop"],
                               "analysis": {"resamples": 200}}))
    out = tmp_path / "out"
    assert cli.main(["simulate", "--config", str(cfg), "--out", str(out)]) == 0
    assert cli.main(["analyze", "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "noop/prebaking" in text and "runs 4/4" in text
    assert cli.main(["compare", "--out", str(out), "--a", "noop/seuss", "--b", "noop/prebaking",
                     "--format", "json"]) == 0
    assert json.loads(capsys.readouterr().out)["metric"] == "startup"


def test_cli_seed_override(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    cfg = tmp_path / "cfg.json"
    cfg.write_text('{"runs": 3, "requests_per_run": 2, "profiles": ["markdown"]}')
    cli.main(["simulate", "--config", str(cfg), "--out", str(a), "--seed", "1"])
    cli.main(["simulate", "--config", str(cfg), "--out", str(b), "--seed", "2"])
    assert (a / "requests.csv").read_bytes() != (b / "requests.csv").read_bytes()
    assert json.loads((b / "manifest.json").read_text())["seed"] == 2


def test_cli_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"runs": 0}')
    assert cli.main(["simulate", "--config", str(bad), "--out", str(tmp_path / "o")]) == 1
    assert "runs: must be >= 1" in capsys.readouterr().err
    bad.write_text("{")
    assert cli.main(["simulate", "--config", str(bad)]) == 1
    assert cli.main(["bogus"]) == 1
    assert cli.main(["simulate", "--config", str(tmp_path / "missing.json")]) == 2
    assert cli.main(["analyze", "--out", str(tmp_path / "nothing")]) == 2


def test_cli_compare_insufficient(tmp_path, capsys):
    cmd_simulate(small(), tmp_path)
    code = cli.main(["compare", "--out", str(tmp_path), "--a", "big/seuss", "--b", "big/prebaking"])
    assert code == 2
    assert "big/seuss" in capsys.readouterr().err


def test_write_bundle_reports_io_error(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    cfg = tmp_path / "cfg.json"
    cfg.write_text('{"runs": 1, "requests_per_run": 1, "profiles": ["noop"]}')
    assert cli.main(["simulate", "--config", str(cfg), "--out", str(blocker / "sub")]) == 2
    assert str(blocker) in capsys.readouterr().err
