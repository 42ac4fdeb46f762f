"""Brute-force reference computations, independent of snapsim.stats."""

from __future__ import annotations

import itertools
import statistics
from fractions import Fraction


def u_pairs(a, b) -> Fraction:
    """U for ``a`` by direct pairwise counting, ties worth one half."""
    u = Fraction(0)
    for x in a:
        for y in b:
            if x > y:
                u += 1
            elif x == y:
                u += Fraction(1, 2)
    return u


def mw_exact_p(a, b) -> Fraction:
    """Two-sided permutation p-value: share of relabelings with min(U) <= observed."""
    pooled = list(a) + list(b)
    n_a = len(a)
    total = len(a) * len(b)
    u = u_pairs(a, b)
    observed = min(u, total - u)
    hits = count = 0
    for chosen in itertools.combinations(range(len(pooled)), n_a):
        rest = [pooled[i] for i in range(len(pooled)) if i not in chosen]
        ua = u_pairs([pooled[i] for i in chosen], rest)
        count += 1
        if min(ua, total - ua) <= observed:
            hits += 1
    return Fraction(hits, count)


def quantile_linear(values, q: float) -> float:
    """Linear interpolation between order statistics at position q * (n - 1)."""
    xs = sorted(values)
    pos = q * (len(xs) - 1)
    lo = int(pos)
    hi = min(lo + 1, len(xs) - 1)
    return xs[lo] + (xs[hi] - xs[lo]) * (pos - lo)


def all_resample_medians(data):
    n = len(data)
    return [statistics.median([data[i] for i in idx]) for idx in itertools.product(range(n), repeat=n)]


def bootstrap_ci_enumerated(data, level):
    meds = all_resample_medians(data)
    return quantile_linear(meds, (1 - level) / 2), quantile_linear(meds, (1 + level) / 2)


def bootstrap_diff_ci_enumerated(a, b, level):
    ma = all_resample_medians(a)
    mb = all_resample_medians(b)
    diffs = [y - x for x in ma for y in mb]
    return quantile_linear(diffs, (1 - level) / 2), quantile_linear(diffs, (1 + level) / 2)
