"""Function profiles, stage-cost model and seeded service-time sampling.

All durations are integer ticks of one microsecond. Human-facing output
converts to milliseconds by dividing by 1000.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

TICKS_PER_MS = 1000
MIB = 2**20
PAGE_BYTES = 4096

PREBAKING = "prebaking"
SEUSS = "seuss"
STRATEGIES = (PREBAKING, SEUSS)

COLD = "cold"
HOT = "hot"


def ms(value: float) -> int:
    """Milliseconds to ticks."""
    return int(round(value * TICKS_PER_MS))


def format_ms(ticks: int) -> str:
    """Ticks rendered as milliseconds with three decimals, no float rounding."""
    sign = "-" if ticks < 0 else ""
    ticks = abs(ticks)
    return f"{sign}{ticks // TICKS_PER_MS}.{ticks % TICKS_PER_MS:03d}"


class ProfileNotFound(KeyError):
    pass


@dataclass(frozen=True)
class StageCosts:
    isolation_boot: int = 0
    runtime_init: int = 0
    code_load_compile: int = 0
    restore: int = 0

    def scaled(self, factor: float) -> StageCosts:
        return StageCosts(
            isolation_boot=int(round(self.isolation_boot * factor)),
            runtime_init=int(round(self.runtime_init * factor)),
            code_load_compile=int(round(self.code_load_compile * factor)),
            restore=int(round(self.restore * factor)),
        )


@dataclass(frozen=True)
class ServiceModel:
    cold_median: int
    hot_median: int
    # sigma of the multiplicative log-normal noise
    dispersion: float = 0.0

    def median(self, scenario: str) -> int:
        return self.cold_median if scenario == COLD else self.hot_median


@dataclass(frozen=True)
class FunctionProfile:
    name: str
    runtime_id: str
    dependency_bytes: int
    stage_costs: dict[str, StageCosts]
    service: dict[str, ServiceModel]
    pages: int
    failure_prob: dict[str, float] = field(default_factory=dict)


def validate_profile(profile: FunctionProfile, strategies) -> list[str]:
    """Return every violated profile invariant as ``"<field path>: <reason>"``."""
    problems = []
    if not profile.name:
        problems.append("name: must be non-empty")
    if not profile.runtime_id:
        problems.append("runtime_id: must be non-empty")
    if profile.dependency_bytes < 0:
        problems.append("dependency_bytes: must be >= 0")
    if profile.pages < 1:
        problems.append("pages: must be >= 1")
    for strategy in sorted(strategies):
        costs = profile.stage_costs.get(strategy)
        if costs is None:
            problems.append(f"stage_costs.{strategy}: missing entry")
        else:
            for name in ("isolation_boot", "runtime_init", "code_load_compile", "restore"):
                if getattr(costs, name) < 0:
                    problems.append(f"stage_costs.{strategy}.{name}: must be >= 0")
            # a snapshot that restores slower than booting from scratch is never chosen
            if costs.restore > costs.isolation_boot + costs.runtime_init:
                problems.append(
                    f"stage_costs.{strategy}.restore: must not exceed isolation_boot + runtime_init"
                )
        service = profile.service.get(strategy)
        if service is None:
            problems.append(f"service.{strategy}: missing entry")
        else:
            if service.cold_median <= 0:
                problems.append(f"service.{strategy}.cold_median: must be > 0")
            if service.hot_median <= 0:
                problems.append(f"service.{strategy}.hot_median: must be > 0")
            if not service.dispersion >= 0:
                problems.append(f"service.{strategy}.dispersion: must be >= 0")
        prob = profile.failure_prob.get(strategy)
        if prob is None:
            problems.append(f"failure_prob.{strategy}: missing entry")
        elif not 0.0 <= prob <= 1.0:
            problems.append(f"failure_prob.{strategy}: must be in [0, 1]")
    return problems


def code_load_cost(dependency_bytes: int) -> int:
    """Default code load/compile cost: 10 ms plus 5 ms per MiB of dependencies."""
    return ms(10) + int(round(5 * TICKS_PER_MS * dependency_bytes / MIB))


def default_pages(dependency_bytes: int, base_pages: int = 4096) -> int:
    return base_pages + math.ceil(dependency_bytes / PAGE_BYTES)


PREBAKING_DISPERSION = 0.012
SEUSS_DISPERSION = 0.03

# (function) -> dependency bytes, prebaking restore, seuss warm-path startup,
#               {strategy: (cold ms, hot ms)}, seuss failure probability
_CALIBRATION = {
    "noop": dict(
        dependency_bytes=0,
        prebaking_startup=8.0,
        seuss_startup=13.0,
        service={PREBAKING: (1.0, 1.0), SEUSS: (2.0, 3.0)},
        seuss_failure=0.05,
    ),
    "markdown": dict(
        dependency_bytes=256 * 1024,
        prebaking_startup=9.0,
        seuss_startup=12.5,
        service={PREBAKING: (21.4, 32.4), SEUSS: (68.0, 62.0)},
        seuss_failure=0.05,
    ),
    "big": dict(
        dependency_bytes=41 * MIB,
        prebaking_startup=27.0,
        # no successful run exists to calibrate against; restore mirrors noop
        seuss_startup=None,
        service={PREBAKING: (70.0, 10.0), SEUSS: (70.0, 10.0)},
        seuss_failure=1.0,
    ),
}

BUILTIN_NAMES = tuple(_CALIBRATION)
DEFAULT_RUNTIME = "nodejs"


def builtin_profile(name: str) -> FunctionProfile:
    """Default-calibrated profile for one of ``noop``, ``markdown`` or ``big``."""
    try:
        cal = _CALIBRATION[name]
    except KeyError:
        raise ProfileNotFound(f"unknown builtin profile {name!r}") from None

    code_load = code_load_cost(cal["dependency_bytes"])
    cold_stages = dict(isolation_boot=ms(100), runtime_init=ms(50), code_load_compile=code_load)
    prebaking = StageCosts(restore=ms(cal["prebaking_startup"]), **cold_stages)
    # SEUSS startup is measured on the warm path (restore + code load), so the
    # restore cost absorbs whatever the code load does not explain
    if cal["seuss_startup"] is None:
        seuss_restore = ms(3)
    else:
        seuss_restore = ms(cal["seuss_startup"]) - code_load
    seuss = StageCosts(restore=seuss_restore, **cold_stages)

    dispersion = {PREBAKING: PREBAKING_DISPERSION, SEUSS: SEUSS_DISPERSION}
    service = {
        strategy: ServiceModel(ms(cold), ms(hot), dispersion[strategy])
        for strategy, (cold, hot) in cal["service"].items()
    }
    return FunctionProfile(
        name=name,
        runtime_id=DEFAULT_RUNTIME,
        dependency_bytes=cal["dependency_bytes"],
        stage_costs={PREBAKING: prebaking, SEUSS: seuss},
        service=service,
        pages=default_pages(cal["dependency_bytes"]),
        failure_prob={PREBAKING: 0.0, SEUSS: cal["seuss_failure"]},
    )


def with_dispersion(profile: FunctionProfile, dispersion: float) -> FunctionProfile:
    """Copy of ``profile`` with every strategy's dispersion set to ``dispersion``."""
    service = {k: replace(v, dispersion=dispersion) for k, v in profile.service.items()}
    return replace(profile, service=service)


def lognormal_factor(sigma: float, rng: np.random.Generator) -> float:
    """Median-one multiplicative noise. Always consumes one normal draw."""
    z = rng.standard_normal()
    return math.exp(sigma * z)


def sample_service_time(
    profile: FunctionProfile, strategy: str, scenario: str, rng: np.random.Generator
) -> int:
    """Draw one service time whose distribution median is the scenario median."""
    model = profile.service[strategy]
    median = model.median(scenario)
    factor = lognormal_factor(model.dispersion, rng)
    if factor == 1.0:
        return median
    return max(1, int(round(median * factor)))
