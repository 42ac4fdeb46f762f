"""Experiment config documents (JSON).

Durations in the document are milliseconds; they become integer ticks on
load. A profile entry is either a builtin name or an object; an object with
``"base"`` starts from that builtin and overrides only the given fields.

Example::

    {
      "strategies": ["prebaking", "seuss"],
      "profiles": ["noop", {"base": "markdown", "service": {"seuss": {"dispersion": 0.05}}}],
      "runs": 100,
      "seed": 42,
      "analysis": {"comparisons": [{"a": "noop/seuss", "b": "noop/prebaking"}]}
    }
"""

from __future__ import annotations

import json
from dataclasses import replace
from pathlib import Path

from . import model
from .engine import AnalysisSettings, ConfigError, ExperimentConfig, validate_config
from .model import FunctionProfile, ServiceModel, StageCosts

METRICS = ("startup", "service_cold", "service_hot")

_TOP_KEYS = {
    "runs",
    "requests_per_run",
    "rate_per_second",
    "seed",
    "strategies",
    "profiles",
    "max_retries",
    "dirty_fraction",
    "runtime_page_fraction",
    "cache_capacity_pages",
    "startup_jitter_scale",
    "analysis",
}
_ANALYSIS_KEYS = {"level", "resamples", "comparisons"}
_COMPARISON_KEYS = {"a", "b", "metric"}
_PROFILE_KEYS = {
    "base",
    "name",
    "runtime_id",
    "dependency_bytes",
    "pages",
    "stage_costs",
    "service",
    "failure_prob",
}
_STAGE_KEYS = {
    "isolation_boot_ms": "isolation_boot",
    "runtime_init_ms": "runtime_init",
    "code_load_compile_ms": "code_load_compile",
    "restore_ms": "restore",
}
_SERVICE_KEYS = {"cold_median_ms": "cold_median", "hot_median_ms": "hot_median", "dispersion": None}


class ConfigSyntaxError(ValueError):
    def __init__(self, message: str, line: int, column: int):
        self.line = line
        self.column = column
        super().__init__(f"line {line}, column {column}: {message}")


class _Checker:
    def __init__(self):
        self.problems: list[str] = []

    def unknown(self, obj: dict, allowed, path: str) -> None:
        for key in sorted(set(obj) - set(allowed)):
            self.problems.append(f"{path}{key}: unknown key")

    def obj(self, value, path: str) -> dict:
        if not isinstance(value, dict):
            self.problems.append(f"{path}: expected an object")
            return {}
        return value

    def int_(self, value, path: str):
        if isinstance(value, bool) or not isinstance(value, int):
            self.problems.append(f"{path}: expected an integer")
            return None
        return value

    def num(self, value, path: str):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.problems.append(f"{path}: expected a number")
            return None
        return float(value)

    def str_(self, value, path: str):
        if not isinstance(value, str):
            self.problems.append(f"{path}: expected a string")
            return None
        return value


def _parse_profile(entry, path: str, chk: _Checker) -> FunctionProfile | None:
    if isinstance(entry, str):
        try:
            return model.builtin_profile(entry)
        except model.ProfileNotFound:
            chk.problems.append(f"{path}: unknown builtin profile {entry!r}")
            return None
    entry = chk.obj(entry, path)
    chk.unknown(entry, _PROFILE_KEYS, f"{path}.")
    if "base" in entry:
        try:
            base = model.builtin_profile(entry["base"])
        except (model.ProfileNotFound, TypeError):
            chk.problems.append(f"{path}.base: unknown builtin profile {entry['base']!r}")
            return None
    else:
        missing = [k for k in ("name", "stage_costs", "service", "pages") if k not in entry]
        for k in missing:
            chk.problems.append(f"{path}.{k}: required when no base is given")
        if missing:
            return None
        base = FunctionProfile(
            name="",
            runtime_id=model.DEFAULT_RUNTIME,
            dependency_bytes=0,
            stage_costs={},
            service={},
            pages=1,
            failure_prob={},
        )

    fields = {}
    if "name" in entry:
        fields["name"] = chk.str_(entry["name"], f"{path}.name")
    if "runtime_id" in entry:
        fields["runtime_id"] = chk.str_(entry["runtime_id"], f"{path}.runtime_id")
    for key in ("dependency_bytes", "pages"):
        if key in entry:
            fields[key] = chk.int_(entry[key], f"{path}.{key}")

    stage_costs = dict(base.stage_costs)
    for strategy, raw in chk.obj(entry.get("stage_costs", {}), f"{path}.stage_costs").items():
        p = f"{path}.stage_costs.{strategy}"
        raw = chk.obj(raw, p)
        chk.unknown(raw, _STAGE_KEYS, f"{p}.")
        current = stage_costs.get(strategy, StageCosts())
        updates = {}
        for key, attr in _STAGE_KEYS.items():
            if key in raw:
                v = chk.num(raw[key], f"{p}.{key}")
                if v is not None:
                    updates[attr] = model.ms(v)
        stage_costs[strategy] = replace(current, **updates)

    service = dict(base.service)
    for strategy, raw in chk.obj(entry.get("service", {}), f"{path}.service").items():
        p = f"{path}.service.{strategy}"
        raw = chk.obj(raw, p)
        chk.unknown(raw, _SERVICE_KEYS, f"{p}.")
        current = service.get(strategy)
        if current is None:
            missing = [k for k in ("cold_median_ms", "hot_median_ms") if k not in raw]
            for k in missing:
                chk.problems.append(f"{p}.{k}: required")
            if missing:
                continue
            current = ServiceModel(1, 1, 0.0)
        updates = {}
        for key, attr in _SERVICE_KEYS.items():
            if key in raw:
                v = chk.num(raw[key], f"{p}.{key}")
                if v is not None:
                    updates[attr or key] = v if attr is None else model.ms(v)
        service[strategy] = replace(current, **updates)

    failure_prob = dict(base.failure_prob)
    for strategy, raw in chk.obj(entry.get("failure_prob", {}), f"{path}.failure_prob").items():
        v = chk.num(raw, f"{path}.failure_prob.{strategy}")
        if v is not None:
            failure_prob[strategy] = v

    if any(v is None for v in fields.values()):
        return None
    return replace(
        base, stage_costs=stage_costs, service=service, failure_prob=failure_prob, **fields
    )


def _parse_analysis(raw, chk: _Checker) -> AnalysisSettings:
    raw = chk.obj(raw, "analysis")
    chk.unknown(raw, _ANALYSIS_KEYS, "analysis.")
    out = AnalysisSettings()
    if "level" in raw:
        v = chk.num(raw["level"], "analysis.level")
        if v is not None:
            out = replace(out, level=v)
    if "resamples" in raw:
        v = chk.int_(raw["resamples"], "analysis.resamples")
        if v is not None:
            out = replace(out, resamples=v)
    comparisons = []
    for i, item in enumerate(raw.get("comparisons", [])):
        p = f"analysis.comparisons[{i}]"
        item = chk.obj(item, p)
        chk.unknown(item, _COMPARISON_KEYS, f"{p}.")
        a = chk.str_(item.get("a"), f"{p}.a")
        b = chk.str_(item.get("b"), f"{p}.b")
        metric = item.get("metric", "startup")
        if metric not in METRICS:
            chk.problems.append(f"{p}.metric: must be one of {', '.join(METRICS)}")
        elif a is not None and b is not None:
            comparisons.append((a, b, metric))
    return replace(out, comparisons=tuple(comparisons))


def config_from_dict(doc) -> ExperimentConfig:
    """Build and validate a config; raises :class:`ConfigError` listing every problem."""
    chk = _Checker()
    doc = chk.obj(doc, "config")
    chk.unknown(doc, _TOP_KEYS, "")
    fields = {}
    for key in ("runs", "requests_per_run", "seed", "max_retries"):
        if key in doc:
            fields[key] = chk.int_(doc[key], key)
    for key in ("rate_per_second", "dirty_fraction", "runtime_page_fraction", "startup_jitter_scale"):
        if key in doc:
            fields[key] = chk.num(doc[key], key)
    if doc.get("cache_capacity_pages") is not None:
        fields["cache_capacity_pages"] = chk.int_(doc["cache_capacity_pages"], "cache_capacity_pages")

    if "strategies" in doc:
        raw = doc["strategies"]
        if not isinstance(raw, list) or not all(isinstance(s, str) for s in raw):
            chk.problems.append("strategies: expected a list of strings")
        else:
            fields["strategies"] = tuple(raw)

    raw_profiles = doc.get("profiles", list(model.BUILTIN_NAMES))
    if not isinstance(raw_profiles, list):
        chk.problems.append("profiles: expected a list")
        raw_profiles = []
    profiles = [_parse_profile(e, f"profiles[{i}]", chk) for i, e in enumerate(raw_profiles)]
    fields["analysis"] = _parse_analysis(doc.get("analysis", {}), chk)

    if chk.problems or any(v is None for v in fields.values()) or None in profiles:
        raise ConfigError(chk.problems or ["config: invalid"])
    config = ExperimentConfig(profiles=tuple(profiles), **fields)
    problems = validate_config(config)
    if problems:
        raise ConfigError(problems)
    return config


def parse_config(text: str) -> ExperimentConfig:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigSyntaxError(exc.msg, exc.lineno, exc.colno) from None
    return config_from_dict(doc)


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


def _ms(ticks: int) -> float:
    return ticks / model.TICKS_PER_MS


def profile_to_dict(profile: FunctionProfile) -> dict:
    return {
        "name": profile.name,
        "runtime_id": profile.runtime_id,
        "dependency_bytes": profile.dependency_bytes,
        "pages": profile.pages,
        "stage_costs": {
            s: {key: _ms(getattr(c, attr)) for key, attr in _STAGE_KEYS.items()}
            for s, c in sorted(profile.stage_costs.items())
        },
        "service": {
            s: {
                "cold_median_ms": _ms(m.cold_median),
                "hot_median_ms": _ms(m.hot_median),
                "dispersion": m.dispersion,
            }
            for s, m in sorted(profile.service.items())
        },
        "failure_prob": dict(sorted(profile.failure_prob.items())),
    }


def config_to_dict(config: ExperimentConfig) -> dict:
    """Fully expanded document; ``config_from_dict`` of it reproduces ``config``."""
    return {
        "runs": config.runs,
        "requests_per_run": config.requests_per_run,
        "rate_per_second": config.rate_per_second,
        "seed": config.seed,
        "strategies": list(config.strategies),
        "profiles": [profile_to_dict(p) for p in config.profiles],
        "max_retries": config.max_retries,
        "dirty_fraction": config.dirty_fraction,
        "runtime_page_fraction": config.runtime_page_fraction,
        "cache_capacity_pages": config.cache_capacity_pages,
        "startup_jitter_scale": config.startup_jitter_scale,
        "analysis": {
            "level": config.analysis.level,
            "resamples": config.analysis.resamples,
            "comparisons": [
                {"a": a, "b": b, "metric": m} for a, b, m in config.analysis.comparisons
            ],
        },
    }
