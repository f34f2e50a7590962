import math

import numpy as np
import pytest

from seqlab import (
    BetaBernoulli,
    ConfigError,
    DiscoveryCriterion,
    EmpiricalList,
    ExhaustionError,
    FixedN,
    FixedNEarlyStop,
    NormalKnownVariance,
    Optimal,
    PriorSampled,
    SimulationConfig,
    TruncatedProblem,
    acceptance_series,
    compare_policies,
    make_policy,
    reports_to_csv,
    reports_to_json,
    run_until_discovery,
    simulate,
    solve_optimal,
)
from seqlab.sim import CSV_COLUMNS, Outcome, replication_streams

BB = BetaBernoulli(45.0, 130.0)
CRIT = DiscoveryCriterion(0.27, 0.05)


@pytest.fixture(scope="module")
def optimal():
    table = solve_optimal(TruncatedProblem(BB, CRIT, 500))
    return make_policy(Optimal(table), BB, CRIT)


def test_all_success_stream_discovers_first_experiment(optimal):
    recs = run_until_discovery(optimal, EmpiricalList([1.0, 0.2], shuffle=False), np.random.default_rng(0))
    a = acceptance_series(BB, CRIT, 500)
    first = next(n for n in range(1, 501) if a[n] <= n)
    assert len(recs) == 1
    assert recs[0].outcome is Outcome.DISCOVERED
    assert recs[0].samples_used == first
    assert recs[0].map_estimate == pytest.approx(BB.map(first, first))


def test_records_are_deterministic_and_consistent(optimal):
    r1 = run_until_discovery(optimal, PriorSampled(BB), np.random.default_rng(42))
    r2 = run_until_discovery(optimal, PriorSampled(BB), np.random.default_rng(42))
    assert r1 == r2
    idx = [r.experiment_index for r in r1]
    assert idx == sorted(set(idx))
    assert r1[-1].cumulative_time == sum(r.samples_used for r in r1)
    assert all(r.samples_used >= 1 for r in r1)
    assert all((r.map_estimate is not None) == (r.outcome is Outcome.DISCOVERED) for r in r1)
    assert [r.outcome for r in r1[:-1]] == [Outcome.REJECTED] * (len(r1) - 1)


def test_exhaustion_carries_partial_records(optimal):
    with pytest.raises(ExhaustionError) as info:
        run_until_discovery(optimal, EmpiricalList([0.0, 0.0, 0.01], shuffle=False), np.random.default_rng(1))
    assert len(info.value.records) == 3


def test_all_alternatives_discovered_gives_perfect_metrics(optimal):
    rep = simulate(SimulationConfig(optimal, EmpiricalList([1.0] * 5), replications=3, seed=0))
    assert rep.fdp == 0.0 and rep.power == 1.0 and rep.n_discoveries == 15


def test_conservation_and_invariants(optimal):
    rep = simulate(SimulationConfig(optimal, PriorSampled(BB), replications=50, seed=3, discoveries_per_replication=2))
    assert rep.n_discoveries == 100
    assert rep.mean_time_to_discovery == rep.total_observations / rep.n_discoveries
    assert 0 <= rep.fdp <= 1 and 0 <= rep.power <= 1
    assert sum(b["n_experiments"] for b in rep.buckets) == rep.n_experiments_started
    assert sum(b["n_discovered"] for b in rep.buckets) == rep.n_discoveries
    assert rep.total_cost_with_c == rep.total_observations


def test_fixed_cost_accumulates(optimal):
    rep = simulate(SimulationConfig(optimal, PriorSampled(BB), replications=10, seed=3, c=2.5))
    assert rep.total_cost_with_c == rep.total_observations + 2.5 * rep.n_experiments_started


def test_seed_and_thread_determinism(optimal):
    truth = EmpiricalList(np.random.default_rng(8).beta(45, 130, 300))
    cfg = dict(policy=optimal, truth=truth, replications=16, seed=77)
    a = simulate(SimulationConfig(**cfg, threads=1))
    b = simulate(SimulationConfig(**cfg, threads=8))
    assert a.to_dict() == b.to_dict()
    c = simulate(SimulationConfig(**{**cfg, "seed": 78}))
    assert c.to_dict() != a.to_dict()


def test_replication_streams_are_stable():
    g1, b1 = replication_streams(5, 3)
    g2, b2 = replication_streams(5, 3)
    assert g1.random() == g2.random()
    assert b1.random_raw() == b2.random_raw()
    g3, _ = replication_streams(5, 4)
    assert g3.random() != replication_streams(5, 3)[0].random()


def test_shuffle_flag(optimal):
    eff = np.linspace(0.2, 0.33, 200)
    on = simulate(SimulationConfig(optimal, EmpiricalList(eff, shuffle=True), replications=4, seed=1))
    off = simulate(SimulationConfig(optimal, EmpiricalList(eff, shuffle=False), replications=4, seed=1))
    assert on.n_experiments_started == off.n_experiments_started == 800
    assert on.total_observations != off.total_observations


def test_empirical_support_checked(optimal):
    with pytest.raises(ConfigError):
        simulate(SimulationConfig(optimal, EmpiricalList([0.2, 1.5]), replications=1))


def test_early_stop_never_slower_than_fixed():
    truth = EmpiricalList(np.random.default_rng(2).beta(45, 130, 400))
    cfgs = [
        SimulationConfig(make_policy(FixedN(300), BB, CRIT), truth, replications=30),
        SimulationConfig(make_policy(FixedNEarlyStop(300), BB, CRIT), truth, replications=30),
    ]
    out = compare_policies(cfgs, seed=4)
    assert out["fixed_early"].mean_time_to_discovery <= out["fixed"].mean_time_to_discovery
    # discoveries of fixed-N are also found by early stopping on coupled paths
    assert out["fixed_early"].n_discoveries >= out["fixed"].n_discoveries


def test_compare_rejects_mismatched_models():
    other = DiscoveryCriterion(0.28, 0.05)
    truth = PriorSampled(BB)
    cfgs = [
        SimulationConfig(make_policy(FixedN(100), BB, CRIT), truth, replications=1),
        SimulationConfig(make_policy(FixedN(100), BB, other), truth, replications=1),
    ]
    with pytest.raises(ConfigError):
        compare_policies(cfgs)


def test_normal_model_simulation():
    m = NormalKnownVariance(0.0, 1.0, 1.0)
    crit = DiscoveryCriterion(0.5, 0.05)
    pol = make_policy(FixedNEarlyStop(30), m, crit)
    rep = simulate(SimulationConfig(pol, PriorSampled(m), replications=200, seed=2))
    assert rep.n_discoveries == 200
    assert rep.fdp <= 0.05 + 3 * rep.fdp_se + 1e-12


def test_csv_and_json_outputs(optimal):
    rep = simulate(SimulationConfig(optimal, PriorSampled(BB), replications=5, seed=0))
    text = reports_to_csv([rep])
    lines = text.strip().split("\n")
    assert lines[0].split(",") == CSV_COLUMNS
    assert len(lines) == 2 and lines[1].startswith("optimal,0.27,0.05,")
    import json

    doc = json.loads(reports_to_json([rep], {"seed": 0}))
    assert doc["reports"][0]["n_discoveries"] == 5
    assert math.isfinite(doc["reports"][0]["mean_time_to_discovery"])


def test_policy_that_cannot_discover_fails_fast():
    pol = make_policy(FixedN(10), BB, CRIT)  # a_10 is unreachable for this prior
    with pytest.raises(ConfigError):
        simulate(SimulationConfig(pol, PriorSampled(BB), replications=1))
