import json

import numpy as np
import pytest

from oracles import brute_force_kappa, brute_force_values
from seqlab import (
    BetaBernoulli,
    DiscoveryCriterion,
    DomainError,
    ExperimentState,
    GridError,
    NonConvergenceError,
    NormalGrid,
    NormalKnownVariance,
    PolicyTable,
    TruncatedProblem,
    backward_induction,
    solve_optimal,
    value_at,
)

CASES = [(1, 1, 0.5, 0.3), (2, 3, 0.4, 0.2), (1, 3, 0.25, 0.2)]


def _problem(a, b, s, alpha, k, c=0.0):
    return TruncatedProblem(BetaBernoulli(a, b), DiscoveryCriterion(s, alpha), k, c)


@pytest.mark.parametrize("a,b,s,alpha", CASES)
@pytest.mark.parametrize("k", [2, 3, 4])
def test_kappa_star_matches_enumeration(a, b, s, alpha, k):
    table = solve_optimal(_problem(a, b, s, alpha, k), tol=1e-12)
    assert table.kappa_star == pytest.approx(brute_force_kappa(a, b, k, s, alpha), abs=1e-9)


@pytest.mark.parametrize("a,b,s,alpha", CASES)
@pytest.mark.parametrize("kappa", [1.5, 3.7, 10.0, 11.0])
def test_value_table_matches_enumeration(a, b, s, alpha, kappa):
    k = 4
    res = backward_induction(_problem(a, b, s, alpha, k), kappa, keep_values=True)
    oracle = brute_force_values(a, b, k, s, alpha, kappa)
    for (n, S), w in oracle.items():
        assert res.values[n, S] == pytest.approx(w, abs=1e-9)


@pytest.mark.parametrize("c", [0.5, 3.0])
def test_fixed_cost_convention(c):
    # kappa* + c is the optimal expected total cost E[tau + c m_tau] per discovery
    a, b, s, alpha = 2, 3, 0.4, 0.2
    table = solve_optimal(_problem(a, b, s, alpha, 4, c), tol=1e-12)
    assert table.kappa_star + c == pytest.approx(brute_force_kappa(a, b, 4, s, alpha, c), abs=1e-9)


def test_unreachable_discovery_does_not_converge():
    with pytest.raises(NonConvergenceError):
        solve_optimal(_problem(2, 5, 0.3, 0.15, 2))


def test_sign_property_and_residual():
    table = solve_optimal(_problem(45, 130, 0.27, 0.05, 300))
    k = table.kappa_star
    f = lambda x: backward_induction(table.problem, x).f
    assert abs(f(k) - k) <= 1e-6 * k
    assert f(1.1 * k) < 1.1 * k
    assert f(0.9 * k) > 0.9 * k


def test_thresholds_are_monotone_and_below_acceptance():
    table = solve_optimal(_problem(45, 130, 0.27, 0.05, 500))
    r, a = table.r[1:], table.a[1:]
    finite = np.isfinite(r)
    assert np.all(r[finite] < a[finite])
    # the optimal policy rejects after a single miss for this prior
    assert table.threshold(1) == 0


@pytest.fixture(scope="module")
def k_tables():
    return {k: solve_optimal(_problem(45, 130, 0.27, 0.05, k)) for k in (100, 500, 2000)}


def test_kappa_nonincreasing_in_k(k_tables):
    ks = [k_tables[k].kappa_star for k in (100, 500, 2000)]
    assert ks[0] >= ks[1] >= ks[2] * (1 - 1e-6)


def test_thresholds_decrease_in_k(k_tables):
    r100, r500, r2000 = (k_tables[k].r for k in (100, 500, 2000))
    assert np.all(r2000[:501] <= r500)
    assert np.all(r500[:101] <= r100)


def test_f_nondecreasing_in_kappa():
    problem = _problem(45, 130, 0.27, 0.05, 300)
    vals = [backward_induction(problem, x).f for x in (100.0, 400.0, 800.0, 1600.0, 3200.0)]
    assert all(x <= y for x, y in zip(vals, vals[1:]))


def test_bisection_bracket_independent():
    problem = _problem(45, 130, 0.27, 0.05, 300)
    a = solve_optimal(problem).kappa_star
    b = solve_optimal(problem, kappa_lo=37.0, kappa_hi=41.0).kappa_star
    assert abs(a - b) <= 2e-6 * a


def test_reject_region_downward_closed(k_tables):
    res = backward_induction(k_tables[500].problem, k_tables[500].kappa_star)
    finite = np.isfinite(res.r)
    assert np.all(res.n_rejected[finite] == res.r[finite] + 1)
    assert np.all(res.n_rejected[~finite][1:] == 0)


def test_value_bounds(k_tables):
    table = k_tables[100]
    for n in (1, 10, 60, 100):
        a = table.a[n]
        for S in range(0, n + 1, max(1, n // 10)):
            v = value_at(table, ExperimentState(n, S))
            assert v <= table.kappa_star + 1e-9
            if S >= a:
                assert v == 0.0


def test_value_at_matches_table_row():
    table = solve_optimal(_problem(2, 3, 0.4, 0.2, 4), tol=1e-12)
    res = backward_induction(table.problem, table.kappa_star, keep_values=True)
    for n in range(1, 5):
        for S in range(n + 1):
            assert value_at(table, ExperimentState(n, S)) == pytest.approx(res.values[n, S], abs=1e-12)
    with pytest.raises(DomainError):
        value_at(table, ExperimentState(5, 0))


def test_policy_table_round_trip(tmp_path):
    table = solve_optimal(_problem(45, 130, 0.27, 0.05, 200))
    path = tmp_path / "t.json"
    table.save(path)
    back = PolicyTable.load(path)
    assert back.kappa_star == table.kappa_star
    np.testing.assert_array_equal(back.a, table.a)
    np.testing.assert_array_equal(back.r, table.r)
    assert json.dumps(back.to_dict()) == json.dumps(table.to_dict())


def test_bad_kappa_and_k():
    with pytest.raises(DomainError):
        backward_induction(_problem(1, 1, 0.5, 0.3, 3), -1.0)
    with pytest.raises(DomainError):
        _problem(1, 1, 0.5, 0.3, 0)


# ---- Normal model --------------------------------------------------------

NM = NormalKnownVariance(0.0, 1.0, 1.0)
NCRIT = DiscoveryCriterion(-1.0, 0.05)


@pytest.fixture(scope="module")
def normal_table():
    return solve_optimal(TruncatedProblem(NM, NCRIT, 200))


def test_normal_rejection_above_running_threshold(normal_table):
    # rejects while the running sum is still above n*s
    assert normal_table.threshold(1) > 1 * NCRIT.s


def test_normal_kappa_matches_simulation(normal_table):
    from seqlab import Optimal, PriorSampled, SimulationConfig, make_policy, simulate

    pol = make_policy(Optimal(normal_table), NM, NCRIT)
    rep = simulate(SimulationConfig(pol, PriorSampled(NM), replications=4000, seed=9))
    assert abs(rep.mean_time_to_discovery - normal_table.kappa_star) < 3 * rep.mean_time_se


def test_normal_grid_refinement_is_stable(normal_table):
    coarse = solve_optimal(TruncatedProblem(NM, NCRIT, 200, grid=NormalGrid.default(NM, NCRIT, 2001)))
    assert coarse.kappa_star == pytest.approx(normal_table.kappa_star, rel=5e-3)


def test_normal_narrow_grid_leaks():
    grid = NormalGrid(-1.2, -0.8, 401)
    with pytest.raises(GridError):
        backward_induction(TruncatedProblem(NM, NCRIT, 20, grid=grid), 3.0)


def test_grid_rejected_for_beta_model():
    with pytest.raises(DomainError):
        TruncatedProblem(BetaBernoulli(1, 1), DiscoveryCriterion(0.5, 0.3), 3, grid=NormalGrid(0, 1, 11))
