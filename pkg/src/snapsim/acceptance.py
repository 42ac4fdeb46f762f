"""Reference-result checks over an analyzed bundle.

Each check returns a :class:`Check`; ``snapsim check`` prints one line per
check and exits 3 if any fails.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .lifecycle import UcCache, seuss_node_bootstrap, seuss_provision
from .model import FunctionProfile, ServiceModel, StageCosts
from .report import NO_DATA, Tables, compare, load_tables, summary_document


@dataclass(frozen=True)
class Check:
    criterion: int
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} [{self.criterion}] {self.name}: {self.detail}"


def _within(x, lo, hi) -> bool:
    return x is not None and lo <= x <= hi


def _overlaps(lo, hi, target_lo, target_hi) -> bool:
    return lo <= target_hi and target_lo <= hi


def _median(summary, group, metric="startup", scenario=None):
    entry = summary["groups"].get(group)
    if entry is None:
        return None
    stat = entry["startup"] if metric == "startup" else entry["service"][scenario]
    return stat.get("median_ms")


def startup_medians(summary) -> list[Check]:
    targets = [
        ("noop/prebaking", 7.5, 8.5),
        ("noop/seuss", 12.0, 14.0),
        ("markdown/seuss", 12.0, 13.0),
        ("markdown/prebaking", 8.5, 9.5),
    ]
    out = []
    for group, lo, hi in targets:
        m = _median(summary, group)
        out.append(Check(1, f"{group} startup median", _within(m, lo, hi), f"{m} ms in [{lo}, {hi}]"))
    return out


def startup_comparisons(tables: Tables) -> list[Check]:
    targets = [("noop", (33, 45), (4, 6)), ("markdown", (25, 31), (3, 4))]
    out = []
    for function, pct, diff in targets:
        rep = compare(tables, f"{function}/seuss", f"{function}/prebaking", "startup")
        out.append(Check(2, f"{function} Mann-Whitney", rep["p_value"] < 0.05, f"p = {rep['p_value']:.3g} < 0.05"))
        out.append(Check(
            2,
            f"{function} percent gap",
            _overlaps(rep["pct_low"], rep["pct_high"], *pct),
            f"[{rep['pct_low']}, {rep['pct_high']}]% overlaps {list(pct)}",
        ))
        out.append(Check(
            2,
            f"{function} median difference CI",
            _overlaps(rep["diff_ci_low"], rep["diff_ci_high"], *diff),
            f"[{rep['diff_ci_low']}, {rep['diff_ci_high']}] ms overlaps {list(diff)}",
        ))
    return out


def service_times(summary) -> list[Check]:
    out = []
    cold = _median(summary, "markdown/seuss", "service", "cold")
    hot = _median(summary, "markdown/seuss", "service", "hot")
    out.append(Check(3, "markdown/seuss cold median", _within(cold, 66, 70), f"{cold} ms in [66, 70]"))
    out.append(Check(3, "markdown/seuss hot median", _within(hot, 60, 64), f"{hot} ms in [60, 64]"))
    pen = summary["groups"]["markdown/seuss"]["service_penalty_pct"]
    out.append(Check(3, "markdown/seuss cold penalty", _within(pen, 8, 12), f"{pen}% in [8, 12]"))
    pen = summary["groups"]["markdown/prebaking"]["service_penalty_pct"]
    out.append(Check(3, "markdown/prebaking cold vs hot", _within(pen, -38, -30), f"{pen}% in [-38, -30]"))
    cold = _median(summary, "big/prebaking", "service", "cold")
    hot = _median(summary, "big/prebaking", "service", "hot")
    ratio = None if cold is None or not hot else round(cold / hot, 3)
    out.append(Check(3, "big/prebaking cold/hot ratio", _within(ratio, 6, 8), f"{ratio} in [6, 8]"))
    cold = _median(summary, "noop/seuss", "service", "cold")
    hot = _median(summary, "noop/seuss", "service", "hot")
    gap = None if cold is None or hot is None else round(hot - cold, 3)
    out.append(Check(3, "noop/seuss hot - cold", _within(gap, 0.5, 1.5), f"{gap} ms in [0.5, 1.5]"))
    return out


def _whisker_groups(plot_csv: Path) -> set[str]:
    with plot_csv.open(newline="") as f:
        return {row["group"] for row in csv.DictReader(f) if row["kind"] == "median"}


def failure_semantics(summary, data_dir) -> list[Check]:
    big = summary["groups"]["big/seuss"]
    whiskers = _whisker_groups(Path(data_dir) / "startup_plot.csv")
    out = [
        Check(4, "big/seuss has no successful run", big["successful_runs"] == 0,
              f"{big['successful_runs']} successful of {big['runs']}"),
        Check(4, "big/seuss reported as no data", big["startup"]["status"] == NO_DATA,
              f"status {big['startup']['status']!r}"),
        Check(4, "big/seuss absent from startup whiskers", "big/seuss" not in whiskers,
              f"whisker groups {sorted(whiskers)}"),
    ]
    for group in ("noop/seuss", "markdown/seuss"):
        g = summary["groups"][group]
        out.append(Check(4, f"{group} recovers every run", g["successful_runs"] == g["runs"],
                         f"{g['successful_runs']}/{g['runs']} after {g['retries']} retries"))
    return out


def prebaking_ordering(summary) -> Check:
    meds = [_median(summary, f"{f}/prebaking") for f in ("noop", "markdown", "big")]
    ok = None not in meds and meds[0] < meds[1] < meds[2]
    return Check(5, "prebaking startup noop < markdown < big", ok, f"{meds} ms")


def random_stage_costs(rng: np.random.Generator) -> StageCosts:
    """Arbitrary valid stage costs: restore never exceeds a fresh boot."""
    boot, init, load = (int(x) for x in rng.integers(0, 500_000, size=3))
    restore = int(rng.integers(0, boot + init + 1))
    return StageCosts(boot, init, load, restore)


def path_startups(costs: StageCosts, pages: int = 100) -> dict[str, int]:
    """Startup on each SEUSS path for one profile, driven through the real cache."""
    profile = FunctionProfile(
        name="f",
        runtime_id="rt",
        dependency_bytes=0,
        stage_costs={"seuss": costs},
        service={"seuss": ServiceModel(1, 1)},
        pages=pages,
        failure_prob={"seuss": 0.0},
    )
    cache = UcCache()
    coldest = seuss_provision(cache, profile)
    cache = seuss_node_bootstrap("rt", [profile], UcCache())
    warm = seuss_provision(cache, profile)
    hot = seuss_provision(cache, profile)
    return {coldest.path.value: coldest.startup, warm.path.value: warm.startup, hot.path.value: hot.startup}


def path_ordering(cases: int = 10_000, seed: int = 0) -> Check:
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(cases):
        s = path_startups(random_stage_costs(rng))
        if not s["hot"] <= s["warm"] <= s["coldest"]:
            bad += 1
    return Check(5, "hot <= warm <= coldest startup", bad == 0, f"{cases - bad}/{cases} cases hold")


def evaluate(data_dir, summary=None, property_cases: int = 10_000) -> list[Check]:
    """Run every data-level check against an analyzed bundle at ``data_dir``."""
    tables = load_tables(data_dir)
    if summary is None:
        summary = summary_document(tables)
    checks = startup_medians(summary)
    checks += startup_comparisons(tables)
    checks += service_times(summary)
    checks += failure_semantics(summary, data_dir)
    checks.append(prebaking_ordering(summary))
    checks.append(path_ordering(property_cases))
    return checks
