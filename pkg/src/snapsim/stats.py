"""Medians, percentile-bootstrap confidence intervals and the Mann-Whitney U test.

Bootstrap quantiles use linear interpolation between order statistics
(``numpy.quantile`` default). Even-sized medians average the two central
values.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

EXACT_MAX_TOTAL = 20
# rows of resample indices generated at once; bounds memory for large samples
_CHUNK_CELLS = 4_000_000


class StatsError(ValueError):
    pass


@dataclass(frozen=True)
class StatSummary:
    n: int
    median: float
    ci_low: float
    ci_high: float
    level: float


@dataclass(frozen=True)
class MannWhitneyResult:
    u_statistic: float
    p_value: float
    method: str
    u_a: float
    u_b: float


@dataclass(frozen=True)
class ComparisonReport:
    group_a: str
    group_b: str
    metric: str
    n_a: int
    n_b: int
    median_a: float
    median_b: float
    u_statistic: float
    p_value: float
    method: str
    # CI of median(a) - median(b)
    diff_ci_low: float
    diff_ci_high: float
    pct_low: float
    pct_high: float
    level: float


def median(samples) -> float:
    values = sorted(samples)
    n = len(values)
    if n == 0:
        raise StatsError("median of empty sample")
    mid = n // 2
    if n % 2:
        return values[mid]
    return (values[mid - 1] + values[mid]) / 2


def _resample_medians(data: np.ndarray, resamples: int, rng: np.random.Generator) -> np.ndarray:
    n = data.size
    rows = max(1, _CHUNK_CELLS // n)
    out = np.empty(resamples)
    done = 0
    while done < resamples:
        k = min(rows, resamples - done)
        idx = rng.integers(0, n, size=(k, n))
        out[done : done + k] = np.median(data[idx], axis=1)
        done += k
    return out


def _all_resample_medians(data: np.ndarray) -> np.ndarray:
    n = data.size
    if n > 7:
        raise StatsError("exhaustive bootstrap limited to n <= 7")
    idx = np.array(list(itertools.product(range(n), repeat=n)), dtype=np.intp)
    return np.median(data[idx], axis=1)


def _percentile_interval(stats: np.ndarray, level: float) -> tuple[float, float]:
    if not 0 < level < 1:
        raise StatsError("level must be in (0, 1)")
    low, high = np.quantile(stats, [(1 - level) / 2, (1 + level) / 2])
    return float(low), float(high)


def bootstrap_median_ci(
    samples,
    level: float = 0.95,
    resamples: int = 10_000,
    seed: int = 0,
    exhaustive: bool = False,
) -> tuple[float, float]:
    """Percentile bootstrap interval for the median.

    With ``exhaustive`` every one of the n**n resamples is used once instead
    of drawing ``resamples`` at random.
    """
    data = np.asarray(samples, dtype=float)
    if data.size < 2:
        raise StatsError("bootstrap needs at least 2 samples")
    if exhaustive:
        medians = _all_resample_medians(data)
    else:
        medians = _resample_medians(data, resamples, np.random.default_rng(seed))
    return _percentile_interval(medians, level)


def bootstrap_median_diff_ci(
    a,
    b,
    level: float = 0.95,
    resamples: int = 10_000,
    seed: int = 0,
    exhaustive: bool = False,
) -> tuple[float, float]:
    """Percentile interval of median(b*) - median(a*), groups resampled independently."""
    xa = np.asarray(a, dtype=float)
    xb = np.asarray(b, dtype=float)
    if xa.size < 2 or xb.size < 2:
        raise StatsError("bootstrap needs at least 2 samples per group")
    if exhaustive:
        ma = _all_resample_medians(xa)
        mb = _all_resample_medians(xb)
        diffs = (mb[None, :] - ma[:, None]).ravel()
    else:
        ra, rb = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2))
        diffs = _resample_medians(xb, resamples, rb) - _resample_medians(xa, resamples, ra)
    return _percentile_interval(diffs, level)


def summarize(samples, level: float = 0.95, resamples: int = 10_000, seed: int = 0) -> StatSummary:
    values = list(samples)
    if not values:
        raise StatsError("cannot summarize an empty sample")
    m = median(values)
    if len(values) == 1:
        low = high = m
    else:
        low, high = bootstrap_median_ci(values, level, resamples, seed)
    return StatSummary(len(values), float(m), low, high, level)


# -- Mann-Whitney ------------------------------------------------------------


def _doubled_midranks(pooled) -> list[int]:
    """Twice the 1-based midranks, so tied ranks stay integral."""
    order = sorted(range(len(pooled)), key=pooled.__getitem__)
    ranks = [0] * len(pooled)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and pooled[order[j + 1]] == pooled[order[i]]:
            j += 1
        # positions i..j (0-based) share rank ((i+1) + (j+1)) / 2
        for k in range(i, j + 1):
            ranks[order[k]] = i + j + 2
        i = j + 1
    return ranks


def _exact_p(ranks2: list[int], n_a: int, stat2: int) -> float:
    """P(|2U - n_a n_b| >= stat2) over all size-n_a subsets of the pooled ranks.

    Counts subsets by doubled rank sum with a subset-sum table instead of
    listing combinations.
    """
    n = len(ranks2)
    n_b = n - n_a
    # counts[k][s]: number of k-subsets with doubled rank sum s
    counts = [dict() for _ in range(n_a + 1)]
    counts[0][0] = 1
    for r in ranks2:
        for k in range(min(n_a, n) - 1, -1, -1):
            for s, c in counts[k].items():
                counts[k + 1][s + r] = counts[k + 1].get(s + r, 0) + c
    hits = 0
    for s, c in counts[n_a].items():
        u2 = s - n_a * (n_a + 1)
        if abs(u2 - n_a * n_b) >= stat2:
            hits += c
    return hits / math.comb(n, n_a)


def _normal_p(ranks2: list[int], n_a: int, n_b: int, u_a: float) -> float:
    n = n_a + n_b
    counts: dict[int, int] = {}
    for r in ranks2:
        counts[r] = counts.get(r, 0) + 1
    ties = sum(t**3 - t for t in counts.values())
    var = n_a * n_b / 12 * ((n + 1) - ties / (n * (n - 1)))
    if var <= 0:
        return 1.0
    dev = abs(u_a - n_a * n_b / 2) - 0.5
    z = max(dev, 0.0) / math.sqrt(var)
    return min(1.0, math.erfc(z / math.sqrt(2)))


def mann_whitney(a, b, method: str = "auto") -> MannWhitneyResult:
    """Two-sided Wilcoxon-Mann-Whitney test.

    ``auto`` enumerates the permutation distribution when the pooled size is
    at most 20 and otherwise uses the tie- and continuity-corrected normal
    approximation.
    """
    a = list(a)
    b = list(b)
    n_a, n_b = len(a), len(b)
    if n_a == 0 or n_b == 0:
        raise StatsError("mann_whitney needs two non-empty samples")
    if method == "auto":
        method = "exact" if n_a + n_b <= EXACT_MAX_TOTAL else "normal-approx"
    ranks2 = _doubled_midranks(a + b)
    u_a2 = sum(ranks2[:n_a]) - n_a * (n_a + 1)
    u_a = u_a2 / 2
    u_b = n_a * n_b - u_a
    if method == "exact":
        p = _exact_p(ranks2, n_a, abs(u_a2 - n_a * n_b))
    elif method in ("normal", "normal-approx"):
        method = "normal-approx"
        p = _normal_p(ranks2, n_a, n_b, u_a)
    else:
        raise StatsError(f"unknown method {method!r}")
    return MannWhitneyResult(min(u_a, u_b), min(1.0, p), method, u_a, u_b)


# -- gaps --------------------------------------------------------------------


def percent_gap(slow_median: float, fast_median: float) -> float:
    """How much faster ``fast`` is, as a percentage of ``slow``."""
    if not slow_median > 0:
        raise StatsError("slow median must be positive")
    return 100 * (slow_median - fast_median) / slow_median


def service_penalty_pct(cold_median: float, hot_median: float) -> float:
    """Extra time of the first request relative to later ones; negative if faster."""
    if not hot_median > 0:
        raise StatsError("hot median must be positive")
    return 100 * (cold_median - hot_median) / hot_median


def compare_groups(
    a,
    b,
    group_a: str = "a",
    group_b: str = "b",
    metric: str = "startup",
    level: float = 0.95,
    resamples: int = 10_000,
    seed: int = 0,
) -> ComparisonReport:
    """Test and interval report for ``a`` (treated as the slower group) against ``b``.

    The percent-gap range is taken from the two groups' median intervals:
    from (slow low, fast high) to (slow high, fast low).
    """
    a = list(a)
    b = list(b)
    if len(a) < 2 or len(b) < 2:
        raise StatsError("both groups need at least 2 observations")
    mw = mann_whitney(a, b)
    diff_low, diff_high = bootstrap_median_diff_ci(b, a, level, resamples, seed)
    sub_a, sub_b = np.random.SeedSequence(seed).spawn(2)
    a_low, a_high = bootstrap_median_ci(a, level, resamples, int(sub_a.generate_state(1)[0]))
    b_low, b_high = bootstrap_median_ci(b, level, resamples, int(sub_b.generate_state(1)[0]))
    gaps = (percent_gap(a_low, b_high), percent_gap(a_high, b_low))
    return ComparisonReport(
        group_a=group_a,
        group_b=group_b,
        metric=metric,
        n_a=len(a),
        n_b=len(b),
        median_a=float(median(a)),
        median_b=float(median(b)),
        u_statistic=mw.u_statistic,
        p_value=mw.p_value,
        method=mw.method,
        diff_ci_low=diff_low,
        diff_ci_high=diff_high,
        pct_low=min(gaps),
        pct_high=max(gaps),
        level=level,
    )
