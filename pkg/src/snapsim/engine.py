"""Discrete-event execution of the benchmark methodology.

Each run resets the environment, provisions one instance starting at t = 0
and replays a constant-rate train of sequential requests against it. Runs
are independent; every run draws from its own generator seeded by
:func:`mix_seed`.
"""

from __future__ import annotations

import hashlib
import heapq
import itertools
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from . import model
from .lifecycle import (
    DEFAULT_DIRTY_FRACTION,
    DEFAULT_RUNTIME_PAGE_FRACTION,
    PathKind,
    UcCache,
    prebaking_deploy,
    prebaking_provision,
    seuss_node_bootstrap,
    seuss_provision,
)
from .model import COLD, HOT, PREBAKING, SEUSS, FunctionProfile

MASK64 = (1 << 64) - 1


class ConfigError(ValueError):
    """Invalid experiment configuration; ``violations`` lists field paths."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


@dataclass(frozen=True)
class AnalysisSettings:
    level: float = 0.95
    resamples: int = 10_000
    # (group_a, group_b, metric); empty means seuss vs prebaking startup per function
    comparisons: tuple[tuple[str, str, str], ...] = ()


@dataclass(frozen=True)
class ExperimentConfig:
    rate_per_second: float = 10.0
    runs: int = 100
    requests_per_run: int = 100
    seed: int = 42
    strategies: tuple[str, ...] = (PREBAKING, SEUSS)
    profiles: tuple[FunctionProfile, ...] = ()
    max_retries: int = 10
    dirty_fraction: float = DEFAULT_DIRTY_FRACTION
    runtime_page_fraction: float = DEFAULT_RUNTIME_PAGE_FRACTION
    cache_capacity_pages: int | None = None
    # startup noise sigma = service dispersion of the strategy * this scale
    startup_jitter_scale: float = 1.0
    analysis: AnalysisSettings = field(default_factory=AnalysisSettings)

    def profile(self, name: str) -> FunctionProfile:
        for p in self.profiles:
            if p.name == name:
                return p
        raise model.ProfileNotFound(name)


def default_config(**overrides) -> ExperimentConfig:
    profiles = tuple(model.builtin_profile(n) for n in model.BUILTIN_NAMES)
    return replace(ExperimentConfig(profiles=profiles), **overrides)


def validate_config(config: ExperimentConfig) -> list[str]:
    problems = []
    if config.runs < 1:
        problems.append("runs: must be >= 1")
    if config.requests_per_run < 1:
        problems.append("requests_per_run: must be >= 1")
    if not config.rate_per_second > 0:
        problems.append("rate_per_second: must be > 0")
    if not 0 <= config.seed <= MASK64:
        problems.append("seed: must be an unsigned 64-bit integer")
    if config.max_retries < 0:
        problems.append("max_retries: must be >= 0")
    if not 0 < config.dirty_fraction <= 1:
        problems.append("dirty_fraction: must be in (0, 1]")
    if not 0 < config.runtime_page_fraction <= 1:
        problems.append("runtime_page_fraction: must be in (0, 1]")
    if config.cache_capacity_pages is not None and config.cache_capacity_pages < 1:
        problems.append("cache_capacity_pages: must be positive")
    if config.startup_jitter_scale < 0:
        problems.append("startup_jitter_scale: must be >= 0")
    if not config.strategies:
        problems.append("strategies: must name at least one strategy")
    for s in config.strategies:
        if s not in model.STRATEGIES:
            problems.append(f"strategies: unknown strategy {s!r}")
    if len(set(config.strategies)) != len(config.strategies):
        problems.append("strategies: duplicate entries")
    if not config.profiles:
        problems.append("profiles: must list at least one profile")
    names = [p.name for p in config.profiles]
    if len(set(names)) != len(names):
        problems.append("profiles: duplicate names")
    known = [s for s in config.strategies if s in model.STRATEGIES]
    for i, p in enumerate(config.profiles):
        problems.extend(f"profiles[{i}].{v}" for v in model.validate_profile(p, known))
    a = config.analysis
    if not 0 < a.level < 1:
        problems.append("analysis.level: must be in (0, 1)")
    if a.resamples < 1:
        problems.append("analysis.resamples: must be >= 1")
    return problems


@dataclass(frozen=True)
class RequestRecord:
    index: int
    scenario: str
    arrival: int
    start: int
    service: int
    response_latency: int

    @property
    def completion(self) -> int:
        return self.start + self.service


@dataclass(frozen=True)
class RunRecord:
    function: str
    strategy: str
    run_id: int
    startup: int = 0
    path: PathKind | None = None
    retries_used: int = 0
    failed: bool = False
    instance_warmed: bool = False
    requests: tuple[RequestRecord, ...] = ()

    @property
    def group(self) -> str:
        return group_name(self.function, self.strategy)


@dataclass(frozen=True)
class ExperimentResult:
    config: ExperimentConfig
    groups: dict[str, tuple[RunRecord, ...]]

    def successful(self, group: str) -> list[RunRecord]:
        return [r for r in self.groups[group] if not r.failed]


def group_name(function: str, strategy: str) -> str:
    return f"{function}/{strategy}"


# -- seeds -------------------------------------------------------------------


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def mix_seed(*parts: int) -> int:
    """Fold integers into one 64-bit seed with the SplitMix64 finalizer.

    ``mix_seed(a, b)`` = splitmix64(splitmix64(0 ^ a) ^ b), and so on.
    """
    x = 0
    for part in parts:
        x = splitmix64(x ^ (part & MASK64))
    return x


def group_key(group: str) -> int:
    """Stable 64-bit identifier of a group name, independent of config order."""
    return int.from_bytes(hashlib.sha256(group.encode()).digest()[:8], "big")


def run_seed(seed: int, group: str, run_id: int, retry: int = 0) -> int:
    return mix_seed(seed, group_key(group), run_id, retry)


# -- load and scenarios ------------------------------------------------------


def schedule_load(rate_per_second: float, n: int) -> list[int]:
    """Arrival ticks of ``n`` requests at a constant rate, the first at t = 0."""
    if not rate_per_second > 0:
        raise ValueError("rate must be positive")
    if n < 1:
        raise ValueError("n must be >= 1")
    return [int(round(i * 1_000_000 / rate_per_second)) for i in range(n)]


def classify_scenario(index: int) -> str:
    if index < 0:
        raise ValueError("index must be >= 0")
    return COLD if index == 0 else HOT


# -- execution ---------------------------------------------------------------

_READY, _ARRIVAL, _DONE = "ready", "arrival", "done"


class EventQueue:
    """Time-ordered event queue; ties break in insertion order."""

    def __init__(self):
        self._heap = []
        self._seq = itertools.count()
        self.now = 0

    def push(self, time: int, kind: str, payload=None) -> None:
        if time < self.now:
            raise ValueError("cannot schedule into the past")
        heapq.heappush(self._heap, (time, next(self._seq), kind, payload))

    def pop(self):
        time, _, kind, payload = heapq.heappop(self._heap)
        self.now = time
        return time, kind, payload

    def __bool__(self) -> bool:
        return bool(self._heap)


def _serve(
    profile: FunctionProfile,
    strategy: str,
    startup: int,
    arrivals: list[int],
    rng: np.random.Generator,
) -> tuple[RequestRecord, ...]:
    queue = EventQueue()
    queue.push(startup, _READY)
    for i, t in enumerate(arrivals):
        queue.push(t, _ARRIVAL, i)

    ready = busy = False
    waiting: deque[int] = deque()
    records = []

    def try_start(now):
        nonlocal busy
        if ready and not busy and waiting:
            i = waiting.popleft()
            scenario = classify_scenario(i)
            # the strategy's cold median already reflects its own warmup
            service = model.sample_service_time(profile, strategy, scenario, rng)
            busy = True
            queue.push(now + service, _DONE, (i, scenario, now, service))

    while queue:
        now, kind, payload = queue.pop()
        if kind == _READY:
            ready = True
        elif kind == _ARRIVAL:
            waiting.append(payload)
        else:
            i, scenario, start, service = payload
            records.append(
                RequestRecord(i, scenario, arrivals[i], start, service, now - arrivals[i])
            )
            busy = False
        try_start(now)
    return tuple(records)


def execute_run(
    strategy: str,
    profile: FunctionProfile,
    seed: int,
    config: ExperimentConfig,
    run_id: int = 0,
    retries_used: int = 0,
) -> RunRecord:
    """One reset-provision-serve cycle. Failures are returned as data."""
    rng = np.random.Generator(np.random.PCG64(seed))
    base = RunRecord(profile.name, strategy, run_id, retries_used=retries_used)

    if rng.random() < profile.failure_prob[strategy]:
        return replace(base, failed=True)

    sigma = profile.service[strategy].dispersion * config.startup_jitter_scale
    costs = profile.stage_costs[strategy].scaled(model.lognormal_factor(sigma, rng))

    if strategy == PREBAKING:
        snapshot, _offline = prebaking_deploy(profile, rng)
        outcome = prebaking_provision(snapshot, profile, costs)
    elif strategy == SEUSS:
        cache = UcCache(config.cache_capacity_pages)
        seuss_node_bootstrap(
            profile.runtime_id, config.profiles or (profile,), cache, config.runtime_page_fraction
        )
        outcome = seuss_provision(cache, profile, costs, config.dirty_fraction)
    else:
        raise ValueError(f"unknown strategy {strategy!r}")

    arrivals = schedule_load(config.rate_per_second, config.requests_per_run)
    requests = _serve(profile, strategy, outcome.startup, arrivals, rng)
    return replace(
        base,
        startup=outcome.startup,
        path=outcome.path,
        instance_warmed=outcome.instance_warmed,
        requests=requests,
    )


def apply_retry_policy(records, config: ExperimentConfig) -> list[RunRecord]:
    """Re-execute failed runs with fresh seeds, up to ``config.max_retries`` times."""
    out = []
    for record in records:
        if record.failed:
            profile = config.profile(record.function)
            for retry in range(1, config.max_retries + 1):
                seed = run_seed(config.seed, record.group, record.run_id, retry)
                record = execute_run(
                    record.strategy, profile, seed, config, record.run_id, retries_used=retry
                )
                if not record.failed:
                    break
        out.append(record)
    return out


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    problems = validate_config(config)
    if problems:
        raise ConfigError(problems)
    pairs = sorted(
        ((p, s) for p in config.profiles for s in config.strategies),
        key=lambda ps: (ps[0].name, ps[1]),
    )
    groups = {}
    for profile, strategy in pairs:
        name = group_name(profile.name, strategy)
        first = [
            execute_run(strategy, profile, run_seed(config.seed, name, i), config, i)
            for i in range(config.runs)
        ]
        groups[name] = tuple(apply_retry_policy(first, config))
    return ExperimentResult(config, groups)
