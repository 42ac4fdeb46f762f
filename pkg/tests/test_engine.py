from __future__ import annotations

from dataclasses import replace

import pytest

from snapsim import model
from snapsim.engine import (
    ConfigError,
    EventQueue,
    ExperimentConfig,
    apply_retry_policy,
    classify_scenario,
    default_config,
    execute_run,
    mix_seed,
    run_experiment,
    run_seed,
    schedule_load,
    splitmix64,
)
from snapsim.lifecycle import PathKind
from snapsim.model import PREBAKING, SEUSS


def small(**kw):
    kw.setdefault("runs", 5)
    kw.setdefault("requests_per_run", 10)
    return default_config(**kw)


def test_schedule_load():
    assert schedule_load(10, 3) == [0, 100_000, 200_000]
    assert schedule_load(1, 1) == [0]
    assert schedule_load(100, 100)[-1] == 990_000


def test_schedule_load_strictly_increasing():
    arr = schedule_load(1_000_000, 50)
    assert all(b > a for a, b in zip(arr, arr[1:]))


@pytest.mark.parametrize("bad", [(0, 1), (-1, 1), (1, 0)])
def test_schedule_load_rejects(bad):
    with pytest.raises(ValueError):
        schedule_load(*bad)


@pytest.mark.parametrize("index, scenario", [(0, "cold"), (1, "hot"), (99, "hot")])
def test_classify_scenario(index, scenario):
    assert classify_scenario(index) == scenario


def test_splitmix_reference_values():
    # first outputs of the SplitMix64 generator seeded with 0
    assert splitmix64(0) == 0xE220A8397B1DCDAF
    assert splitmix64(0x9E3779B97F4A7C15) == 0x6E789E6AA1B965F4
    assert mix_seed(1, 2) != mix_seed(2, 1)


def test_event_queue_orders_ties_by_insertion():
    q = EventQueue()
    q.push(5, "b")
    q.push(1, "a")
    q.push(5, "c")
    assert [q.pop()[1] for _ in range(3)] == ["a", "b", "c"]
    with pytest.raises(ValueError):
        q.push(0, "late")


def test_prebaking_noop_first_request_latency():
    p = model.with_dispersion(model.builtin_profile("noop"), 0.0)
    cfg = small(profiles=(p,), rate_per_second=1.0)
    run = execute_run(PREBAKING, p, 1, cfg)
    first = run.requests[0]
    assert run.startup == 8_000 and run.path is PathKind.HOT
    assert first.scenario == "cold"
    assert first.response_latency == 8_000 + 1_000


def test_prebaking_first_request_draws_cold_median():
    p = model.with_dispersion(model.builtin_profile("markdown"), 0.0)
    run = execute_run(PREBAKING, p, 1, small(profiles=(p,)))
    assert run.instance_warmed
    assert [q.service for q in run.requests[:3]] == [21_400, 32_400, 32_400]


def test_certain_failure():
    p = model.builtin_profile("big")
    run = execute_run(SEUSS, p, 1, small())
    assert run.failed and run.requests == ()


def test_queueing_when_rate_is_high():
    p = model.with_dispersion(model.builtin_profile("markdown"), 0.0)
    run = execute_run(SEUSS, p, 3, small(profiles=(p,), rate_per_second=1000.0))
    prev = 0
    for q in run.requests:
        assert q.start >= max(q.arrival, run.startup, prev)
        assert q.response_latency == q.start + q.service - q.arrival
        prev = q.completion
    assert run.requests[-1].response_latency > run.requests[-1].service


def test_no_queueing_at_low_rate():
    p = model.with_dispersion(model.builtin_profile("noop"), 0.0)
    run = execute_run(PREBAKING, p, 3, small(profiles=(p,), rate_per_second=1.0))
    for q in run.requests[1:]:
        assert q.response_latency == q.service


def test_retry_noop_when_nothing_fails():
    cfg = small()
    p = cfg.profile("noop")
    records = [execute_run(PREBAKING, p, run_seed(42, "noop/prebaking", i), cfg, i) for i in range(5)]
    assert apply_retry_policy(records, cfg) == records


def test_retry_big_seuss_exhausts():
    cfg = small(max_retries=4)
    p = cfg.profile("big")
    records = [execute_run(SEUSS, p, run_seed(42, "big/seuss", i), cfg, i) for i in range(5)]
    final = apply_retry_policy(records, cfg)
    assert all(r.failed and r.retries_used == 4 and not r.requests for r in final)


def test_retry_half_failures():
    p = model.builtin_profile("noop")
    p = replace(p, failure_prob={PREBAKING: 0.5, SEUSS: 0.5})
    cfg = small(profiles=(p,), runs=100, requests_per_run=1, max_retries=10)
    result = run_experiment(cfg)
    runs = result.groups["noop/seuss"]
    failed = sum(r.failed for r in runs)
    assert failed / len(runs) < 0.01
    assert any(r.retries_used > 0 for r in runs)
    assert all(r.retries_used <= cfg.max_retries for r in runs)


def test_run_experiment_paths():
    result = run_experiment(small(profiles=(model.builtin_profile("noop"),)))
    assert all(r.path is PathKind.HOT for r in result.groups["noop/prebaking"])
    assert all(r.path is PathKind.WARM for r in result.successful("noop/seuss"))


def test_single_request():
    result = run_experiment(small(runs=1, requests_per_run=1, strategies=(PREBAKING,),
                                  profiles=(model.builtin_profile("noop"),)))
    (run,) = result.groups["noop/prebaking"]
    assert len(run.requests) == 1


def test_group_order():
    result = run_experiment(small())
    assert list(result.groups) == sorted(result.groups, key=lambda g: tuple(g.split("/")))


def test_deterministic():
    assert run_experiment(small()) == run_experiment(small())


def test_seed_changes_samples():
    a, b = run_experiment(small(seed=1)), run_experiment(small(seed=2))
    assert a.groups["markdown/seuss"] != b.groups["markdown/seuss"]


def test_group_streams_do_not_depend_on_config_order():
    a = run_experiment(small(strategies=(PREBAKING, SEUSS)))
    b = run_experiment(small(strategies=(SEUSS,)))
    assert a.groups["noop/seuss"] == b.groups["noop/seuss"]


def test_request_invariants():
    result = run_experiment(small(rate_per_second=50.0))
    for runs in result.groups.values():
        for r in runs:
            completions = [q.completion for q in r.requests]
            assert completions == sorted(completions)
            for q in r.requests:
                assert q.response_latency >= q.service
                assert (q.scenario == "cold") == (q.index == 0)
                if q.response_latency == q.service:
                    assert q.arrival >= r.startup or q.index > 0


def test_prebaking_startup_constant_without_dispersion():
    p = model.with_dispersion(model.builtin_profile("markdown"), 0.0)
    result = run_experiment(small(profiles=(p,), runs=20))
    assert {r.startup for r in result.groups["markdown/prebaking"]} == {9_000}


def test_invalid_config_lists_violations():
    with pytest.raises(ConfigError) as exc:
        run_experiment(ExperimentConfig(runs=0, rate_per_second=0, profiles=()))
    v = exc.value.violations
    assert "runs: must be >= 1" in v
    assert "rate_per_second: must be > 0" in v
    assert "profiles: must list at least one profile" in v
