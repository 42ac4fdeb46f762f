"""On-disk bundle: raw tables, run manifest, summaries, comparisons and plot data.

Files written to an output directory::

    manifest.json       config echo, seed, tool version, table digests
    startup.csv         group,run_id,startup_ms,path,retries,failed
    requests.csv        group,run_id,request_index,scenario,service_ms,latency_ms
    summary.json        per-group startup and per-scenario service summaries
    comparisons.json    configured group comparisons
    startup_plot.csv    dot-plot data (points and median/CI whisker rows)
    service_plot.csv

Plot files share one layout: ``group,function,strategy,scenario,kind,run_id,
request_index,value_ms,ci_low_ms,ci_high_ms`` where ``kind`` is ``point`` for
raw observations and ``median`` for whisker rows (the CI columns are empty on
point rows). Groups are ordered by (function, strategy).
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from collections import defaultdict
from dataclasses import asdict
from pathlib import Path

from . import __version__
from .config import METRICS, config_from_dict, config_to_dict
from .engine import ExperimentConfig, ExperimentResult, group_key, mix_seed, run_experiment
from .model import COLD, HOT, PREBAKING, SEUSS, format_ms
from .stats import StatsError, compare_groups, service_penalty_pct, summarize

STARTUP_HEADER = ("group", "run_id", "startup_ms", "path", "retries", "failed")
REQUEST_HEADER = ("group", "run_id", "request_index", "scenario", "service_ms", "latency_ms")
PLOT_HEADER = (
    "group",
    "function",
    "strategy",
    "scenario",
    "kind",
    "run_id",
    "request_index",
    "value_ms",
    "ci_low_ms",
    "ci_high_ms",
)
NO_DATA = "no data"


class InsufficientData(ValueError):
    def __init__(self, group: str, n: int):
        self.group = group
        super().__init__(f"group {group!r} has {n} usable observations, need at least 2")


def _csv_bytes(header, rows) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue().encode()


def _json_bytes(doc) -> bytes:
    return (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode()


def startup_rows(result: ExperimentResult):
    for group, runs in result.groups.items():
        for r in runs:
            if r.failed:
                yield (group, r.run_id, "", "", r.retries_used, "true")
            else:
                yield (group, r.run_id, format_ms(r.startup), r.path.value, r.retries_used, "false")


def request_rows(result: ExperimentResult):
    for group, runs in result.groups.items():
        for r in runs:
            for q in r.requests:
                yield (
                    group,
                    r.run_id,
                    q.index,
                    q.scenario,
                    format_ms(q.service),
                    format_ms(q.response_latency),
                )


def write_bundle(result: ExperimentResult, out_dir) -> dict[str, Path]:
    """Write tables and manifest. Output bytes depend only on the config."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "startup.csv": _csv_bytes(STARTUP_HEADER, startup_rows(result)),
        "requests.csv": _csv_bytes(REQUEST_HEADER, request_rows(result)),
    }
    manifest = {
        "tool": "snapsim",
        "version": __version__,
        "seed": result.config.seed,
        "config": config_to_dict(result.config),
        "tables": {name: hashlib.sha256(data).hexdigest() for name, data in files.items()},
    }
    files["manifest.json"] = _json_bytes(manifest)
    paths = {}
    for name, data in files.items():
        path = out / name
        path.write_bytes(data)
        paths[name] = path
    return paths


def cmd_simulate(config: ExperimentConfig, out_dir) -> dict[str, Path]:
    return write_bundle(run_experiment(config), out_dir)


# -- reading back ------------------------------------------------------------


class Tables:
    """Raw tables of a bundle, grouped for analysis (values in milliseconds)."""

    def __init__(self, config: ExperimentConfig, startup, requests):
        self.config = config
        self.startup_rows = startup
        self.request_rows = requests
        self.groups: list[str] = []
        self.runs: dict[str, int] = defaultdict(int)
        self.failed: dict[str, int] = defaultdict(int)
        self.retries: dict[str, int] = defaultdict(int)
        self.startup: dict[str, list[float]] = defaultdict(list)
        self.service: dict[tuple[str, str], list[float]] = defaultdict(list)
        for row in startup:
            g = row["group"]
            if g not in self.runs:
                self.groups.append(g)
            self.runs[g] += 1
            self.retries[g] += int(row["retries"])
            if row["failed"] == "true":
                self.failed[g] += 1
            else:
                self.startup[g].append(float(row["startup_ms"]))
        for row in requests:
            self.service[row["group"], row["scenario"]].append(float(row["service_ms"]))
        self.groups.sort(key=split_group)

    def metric(self, group: str, metric: str) -> list[float]:
        if metric == "startup":
            return self.startup.get(group, [])
        if metric == "service_cold":
            return self.service.get((group, COLD), [])
        if metric == "service_hot":
            return self.service.get((group, HOT), [])
        raise ValueError(f"unknown metric {metric!r}")


def split_group(group: str) -> tuple[str, str]:
    function, _, strategy = group.partition("/")
    return function, strategy


def _read_csv(path: Path, header) -> list[dict]:
    with path.open(newline="") as f:
        reader = csv.DictReader(f)
        if tuple(reader.fieldnames or ()) != tuple(header):
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        return list(reader)


def load_tables(data_dir) -> Tables:
    data = Path(data_dir)
    manifest = json.loads((data / "manifest.json").read_text())
    config = config_from_dict(manifest["config"])
    return Tables(
        config,
        _read_csv(data / "startup.csv", STARTUP_HEADER),
        _read_csv(data / "requests.csv", REQUEST_HEADER),
    )


# -- analysis ----------------------------------------------------------------


def _r(x: float) -> float:
    return round(x, 3)


def analysis_seed(seed: int, group: str, metric: str) -> int:
    return mix_seed(seed, group_key(f"{group}:{metric}"))


def _summary_entry(values, tables: Tables, group: str, metric: str) -> dict:
    if not values:
        return {"status": NO_DATA}
    a = tables.config.analysis
    s = summarize(values, a.level, a.resamples, analysis_seed(tables.config.seed, group, metric))
    return {
        "status": "ok",
        "n": s.n,
        "median_ms": _r(s.median),
        "ci_low_ms": _r(s.ci_low),
        "ci_high_ms": _r(s.ci_high),
        "level": s.level,
    }


def summary_document(tables: Tables) -> dict:
    groups = {}
    for g in tables.groups:
        function, strategy = split_group(g)
        cold = _summary_entry(tables.metric(g, "service_cold"), tables, g, "service_cold")
        hot = _summary_entry(tables.metric(g, "service_hot"), tables, g, "service_hot")
        penalty = None
        if cold["status"] == "ok" and hot["status"] == "ok":
            penalty = _r(service_penalty_pct(cold["median_ms"], hot["median_ms"]))
        groups[g] = {
            "function": function,
            "strategy": strategy,
            "runs": tables.runs[g],
            "failed_runs": tables.failed[g],
            "successful_runs": tables.runs[g] - tables.failed[g],
            "retries": tables.retries[g],
            "startup": _summary_entry(tables.metric(g, "startup"), tables, g, "startup"),
            "service": {COLD: cold, HOT: hot},
            "service_penalty_pct": penalty,
        }
    a = tables.config.analysis
    return {"level": a.level, "resamples": a.resamples, "seed": tables.config.seed, "groups": groups}


def default_comparisons(groups) -> list[tuple[str, str, str]]:
    """SEUSS against Prebaking startup for every function that ran both."""
    present = set(groups)
    out = []
    for function in sorted({split_group(g)[0] for g in groups}):
        a, b = f"{function}/{SEUSS}", f"{function}/{PREBAKING}"
        if a in present and b in present:
            out.append((a, b, "startup"))
    return out


def compare(tables: Tables, group_a: str, group_b: str, metric: str = "startup") -> dict:
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}; expected one of {', '.join(METRICS)}")
    a = tables.metric(group_a, metric)
    b = tables.metric(group_b, metric)
    for g, values in ((group_a, a), (group_b, b)):
        if len(values) < 2:
            raise InsufficientData(g, len(values))
    cfg = tables.config
    seed = mix_seed(cfg.seed, group_key(f"{group_a}|{group_b}:{metric}"))
    report = compare_groups(
        a, b, group_a, group_b, metric, cfg.analysis.level, cfg.analysis.resamples, seed
    )
    doc = asdict(report)
    for key in ("median_a", "median_b", "diff_ci_low", "diff_ci_high", "pct_low", "pct_high"):
        doc[key] = _r(doc[key])
    doc["status"] = "ok"
    return doc


def cmd_compare(data_dir, group_a: str, group_b: str, metric: str = "startup") -> dict:
    return compare(load_tables(data_dir), group_a, group_b, metric)


def comparison_document(tables: Tables) -> dict:
    pairs = tables.config.analysis.comparisons or default_comparisons(tables.groups)
    out = []
    for a, b, metric in pairs:
        try:
            out.append(compare(tables, a, b, metric))
        except (InsufficientData, StatsError) as exc:
            out.append(
                {"group_a": a, "group_b": b, "metric": metric, "status": NO_DATA, "detail": str(exc)}
            )
    return {"comparisons": out}


def _plot_rows(tables: Tables, summary: dict, figure: str):
    scenarios = (None,) if figure == "startup" else (COLD, HOT)
    for g in tables.groups:
        function, strategy = split_group(g)
        entry = summary["groups"][g]
        for scenario in scenarios:
            if scenario is None:
                points = [(r["run_id"], "", r["startup_ms"]) for r in tables.startup_rows
                          if r["group"] == g and r["failed"] == "false"]
                stat = entry["startup"]
            else:
                points = [(r["run_id"], r["request_index"], r["service_ms"]) for r in tables.request_rows
                          if r["group"] == g and r["scenario"] == scenario]
                stat = entry["service"][scenario]
            label = scenario or ""
            for run_id, idx, value in points:
                yield (g, function, strategy, label, "point", run_id, idx, value, "", "")
            if stat["status"] == "ok":
                yield (
                    g, function, strategy, label, "median", "", "",
                    f"{stat['median_ms']:.3f}", f"{stat['ci_low_ms']:.3f}", f"{stat['ci_high_ms']:.3f}",
                )


def emit_plot_data(summary: dict, tables: Tables, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    for figure in ("startup", "service"):
        path = out / f"{figure}_plot.csv"
        path.write_bytes(_csv_bytes(PLOT_HEADER, _plot_rows(tables, summary, figure)))
        paths[path.name] = path
    return paths


def cmd_analyze(data_dir) -> dict:
    """Summaries, comparisons and plot data for a bundle; returns the summary."""
    data = Path(data_dir)
    tables = load_tables(data)
    summary = summary_document(tables)
    (data / "summary.json").write_bytes(_json_bytes(summary))
    (data / "comparisons.json").write_bytes(_json_bytes(comparison_document(tables)))
    emit_plot_data(summary, tables, data)
    return summary
