"""Snapshot lifecycles: deploy-time process snapshots and the multi-level UC cache.

Prebaking takes a single warmed snapshot when the function is deployed and
every instance is a restore of it. SEUSS keeps unikernel contexts (UCs) at two
stages, runtime-ready and function-ready, and provisions from the most
advanced one available. Child UCs share their parent's pages copy-on-write,
so only the pages they dirtied count against the cache footprint.
"""

from __future__ import annotations

import enum
import math
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from .model import (
    COLD,
    PREBAKING,
    SEUSS,
    FunctionProfile,
    StageCosts,
    sample_service_time,
)

DEFAULT_DIRTY_FRACTION = 0.10
DEFAULT_RUNTIME_PAGE_FRACTION = 0.5


class Stage(str, enum.Enum):
    RUNTIME_READY = "runtime_ready"
    FUNCTION_READY = "function_ready"


class PathKind(str, enum.Enum):
    COLDEST = "coldest"
    WARM = "warm"
    HOT = "hot"


class CacheError(Exception):
    pass


class CapacityError(CacheError):
    pass


class BootstrapError(CacheError):
    pass


@dataclass(frozen=True)
class SnapshotRecord:
    function_id: str
    stage_reached: Stage
    pages: int
    warmed: bool


@dataclass(frozen=True)
class UnikernelContext:
    uc_id: str
    runtime_id: str
    stage_reached: Stage
    own_pages: int
    function_id: str | None = None
    parent: str | None = None
    # resident pages of the restored instance, ignoring sharing
    full_pages: int | None = None

    @property
    def total_pages(self) -> int:
        return self.own_pages if self.full_pages is None else self.full_pages


@dataclass(frozen=True)
class ProvisionOutcome:
    startup: int
    path: PathKind
    instance_warmed: bool
    created: tuple[str, ...] = ()
    trace: tuple[tuple[str, int], ...] = ()


def runtime_uc_id(runtime_id: str) -> str:
    return f"runtime:{runtime_id}"


def function_uc_id(function_id: str) -> str:
    return f"function:{function_id}"


class UcCache:
    """Single-owner cache of unikernel contexts.

    Insertion order of ``entries`` doubles as recency order: admitting or
    restoring a UC moves it to the end, eviction scans from the front.
    """

    def __init__(self, capacity_pages: int | None = None):
        if capacity_pages is not None and capacity_pages < 1:
            raise ValueError("capacity_pages must be positive")
        self.capacity_pages = capacity_pages
        self.entries: OrderedDict[str, UnikernelContext] = OrderedDict()

    def __contains__(self, uc_id: str) -> bool:
        return uc_id in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def get(self, uc_id: str) -> UnikernelContext | None:
        return self.entries.get(uc_id)

    def runtime_uc(self, runtime_id: str) -> UnikernelContext | None:
        return self.entries.get(runtime_uc_id(runtime_id))

    def function_uc(self, function_id: str) -> UnikernelContext | None:
        return self.entries.get(function_uc_id(function_id))

    def touch(self, uc_id: str) -> None:
        self.entries.move_to_end(uc_id)

    def own_pages_total(self) -> int:
        return sum(uc.own_pages for uc in self.entries.values())

    def clear_functions(self) -> None:
        """Drop every function-ready UC, keeping the runtime UCs of node bootstrap."""
        for uc_id in [k for k, uc in self.entries.items() if uc.stage_reached is Stage.FUNCTION_READY]:
            del self.entries[uc_id]

    def check_invariants(self) -> list[str]:
        problems = []
        seen_functions = set()
        for uc_id, uc in self.entries.items():
            if uc_id != uc.uc_id:
                problems.append(f"{uc_id}: keyed under wrong id")
            problems.extend(f"{uc_id}: {p}" for p in uc_problems(uc, self))
            if uc.function_id is not None:
                if uc.function_id in seen_functions:
                    problems.append(f"{uc_id}: duplicate function_ready UC for {uc.function_id}")
                seen_functions.add(uc.function_id)
        if self.capacity_pages is not None and self.own_pages_total() > self.capacity_pages:
            problems.append("cache: own pages exceed capacity")
        return problems


def uc_problems(uc: UnikernelContext, cache: UcCache | None = None) -> list[str]:
    problems = []
    if (uc.function_id is None) != (uc.stage_reached is Stage.RUNTIME_READY):
        problems.append("function_id must be absent exactly when stage is runtime_ready")
    if uc.own_pages < 0:
        problems.append("own_pages must be >= 0")
    if uc.parent is not None:
        if uc.stage_reached is Stage.RUNTIME_READY:
            problems.append("runtime_ready UC cannot have a parent")
        elif cache is not None:
            parent = cache.get(uc.parent)
            if parent is None:
                problems.append(f"parent {uc.parent} not cached")
            elif parent.stage_reached is not Stage.RUNTIME_READY or parent.runtime_id != uc.runtime_id:
                problems.append("parent must be a runtime_ready UC of the same runtime")
    return problems


def cache_admit(cache: UcCache, uc: UnikernelContext) -> UcCache:
    """Insert ``uc``, evicting least-recently-used function UCs if over capacity.

    Runtime UCs are pinned. A function UC replaces any existing UC for the
    same function.
    """
    problems = uc_problems(uc, cache)
    if problems:
        raise CacheError(f"{uc.uc_id}: " + "; ".join(problems))
    cap = cache.capacity_pages
    if cap is not None and uc.own_pages > cap:
        raise CapacityError(f"{uc.uc_id} needs {uc.own_pages} pages, capacity is {cap}")

    previous = cache.entries.pop(uc.uc_id, None)
    if cap is not None:
        pinned = sum(
            u.own_pages for u in cache.entries.values() if u.stage_reached is Stage.RUNTIME_READY
        )
        if pinned + uc.own_pages > cap:
            if previous is not None:
                cache.entries[uc.uc_id] = previous
            raise CapacityError(
                f"{uc.uc_id} needs {uc.own_pages} pages, only {cap - pinned} unpinned"
            )
        used = cache.own_pages_total()
        for victim in list(cache.entries.values()):
            if used + uc.own_pages <= cap:
                break
            if victim.stage_reached is Stage.FUNCTION_READY:
                del cache.entries[victim.uc_id]
                used -= victim.own_pages
    cache.entries[uc.uc_id] = uc
    return cache


def memory_footprint(cache: UcCache, sharing: bool = True) -> int:
    """Pages held by the cache.

    With ``sharing`` (copy-on-write), each UC counts its own dirtied pages and
    parent pages are counted once. Without it, each UC counts its full
    resident set.
    """
    if sharing:
        return cache.own_pages_total()
    return sum(uc.total_pages for uc in cache.entries.values())


def dirty_pages(profile_pages: int, dirty_fraction: float) -> int:
    return math.ceil(profile_pages * dirty_fraction)


# -- Prebaking ---------------------------------------------------------------


def prebaking_deploy(
    profile: FunctionProfile, rng: np.random.Generator
) -> tuple[SnapshotRecord, int]:
    """Build the deploy-time snapshot after full initialization and one warmup call.

    Returns the snapshot and the offline cost, which no request ever pays.
    """
    costs = profile.stage_costs[PREBAKING]
    warmup = sample_service_time(profile, PREBAKING, COLD, rng)
    offline = costs.isolation_boot + costs.runtime_init + costs.code_load_compile + warmup
    record = SnapshotRecord(
        function_id=profile.name,
        stage_reached=Stage.FUNCTION_READY,
        pages=profile.pages,
        warmed=True,
    )
    return record, offline


def prebaking_provision(
    snapshot: SnapshotRecord, profile: FunctionProfile, costs: StageCosts | None = None
) -> ProvisionOutcome:
    if snapshot.stage_reached is not Stage.FUNCTION_READY:
        raise ValueError("prebaking restores only function_ready snapshots")
    if costs is None:
        costs = profile.stage_costs[PREBAKING]
    return ProvisionOutcome(
        startup=costs.restore,
        path=PathKind.HOT,
        instance_warmed=snapshot.warmed,
        trace=(("restore", costs.restore),),
    )


# -- SEUSS -------------------------------------------------------------------


def seuss_node_bootstrap(
    runtime_id: str,
    profiles,
    cache: UcCache,
    runtime_page_fraction: float = DEFAULT_RUNTIME_PAGE_FRACTION,
) -> UcCache:
    """Boot the runtime once on a joining node and cache its runtime-only UC.

    The runtime image is sized from the smallest function of that runtime,
    since every function of it must fit on top of the shared base.
    """
    if cache.runtime_uc(runtime_id) is not None:
        raise BootstrapError(f"runtime {runtime_id!r} already bootstrapped")
    sizes = [p.pages for p in profiles if p.runtime_id == runtime_id]
    if not sizes:
        raise BootstrapError(f"no profile uses runtime {runtime_id!r}")
    pages = max(1, math.ceil(min(sizes) * runtime_page_fraction))
    uc = UnikernelContext(
        uc_id=runtime_uc_id(runtime_id),
        runtime_id=runtime_id,
        stage_reached=Stage.RUNTIME_READY,
        own_pages=pages,
    )
    return cache_admit(cache, uc)


def resolve_path(cache: UcCache, function_id: str, runtime_id: str) -> PathKind:
    if cache.function_uc(function_id) is not None:
        return PathKind.HOT
    if cache.runtime_uc(runtime_id) is not None:
        return PathKind.WARM
    return PathKind.COLDEST


def seuss_provision(
    cache: UcCache,
    profile: FunctionProfile,
    costs: StageCosts | None = None,
    dirty_fraction: float = DEFAULT_DIRTY_FRACTION,
) -> ProvisionOutcome:
    """Provision from the most advanced cached UC, mutating ``cache``.

    Warm and coldest paths snapshot the function once it is ready (before
    serving) and admit the new function UC at no extra cost.
    """
    if costs is None:
        costs = profile.stage_costs[SEUSS]
    path = resolve_path(cache, profile.name, profile.runtime_id)

    if path is PathKind.HOT:
        cache.touch(function_uc_id(profile.name))
        trace = (("restore", costs.restore),)
        return ProvisionOutcome(costs.restore, path, instance_warmed=True, trace=trace)

    if path is PathKind.WARM:
        trace = (("restore", costs.restore), ("code_load_compile", costs.code_load_compile))
        parent = runtime_uc_id(profile.runtime_id)
        cache.touch(parent)
        own = dirty_pages(profile.pages, dirty_fraction)
    else:
        trace = (
            ("isolation_boot", costs.isolation_boot),
            ("runtime_init", costs.runtime_init),
            ("code_load_compile", costs.code_load_compile),
        )
        parent = None
        own = profile.pages

    uc = UnikernelContext(
        uc_id=function_uc_id(profile.name),
        runtime_id=profile.runtime_id,
        stage_reached=Stage.FUNCTION_READY,
        own_pages=own,
        function_id=profile.name,
        parent=parent,
        full_pages=profile.pages,
    )
    cache_admit(cache, uc)
    return ProvisionOutcome(
        startup=sum(t for _, t in trace),
        path=path,
        instance_warmed=False,
        created=(uc.uc_id,),
        trace=trace,
    )
