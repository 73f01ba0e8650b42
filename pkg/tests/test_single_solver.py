import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from conftest import chain
from jointoffload.graph import ComputeConfig, all_local_energy, all_local_time
from jointoffload.radio import RadioConfig, effective_bits
from jointoffload.single_solver import (
    ALL_LOCAL,
    INFEASIBLE,
    OPTIMAL,
    Assignment,
    InfeasibleError,
    TransferSets,
    evaluate_partition_single,
    feasibility_single,
    residual_latency,
    solve_p2,
    transfer_sets,
)
import oracles


def energy_of(n, alloc):
    return math.fsum(np.asarray(n) * alloc.powers / alloc.rates)


def delay_of(n, alloc):
    return math.fsum(np.asarray(n) / alloc.rates)


# -- partition bookkeeping -------------------------------------------------------------

def test_transfer_sets_all_local(graph1):
    ts = transfer_sets(graph1, Assignment())
    assert ts.uplink == () and ts.downlink == ()


def test_transfer_sets_single_uplink():
    g = chain(2)
    ts = transfer_sets(g, Assignment({"2"}))
    assert [e.key for e in ts.uplink] == [("1", "2")] and ts.downlink == ()


def test_transfer_sets_graph3_optimum(graph3):
    asg = Assignment({"2", "3", "4", "5", "8"})
    ts = transfer_sets(graph3, asg)
    assert [e.key for e in ts.uplink] == [("1", "2")]
    assert {e.key for e in ts.downlink} == {("3", "6"), ("4", "7")}


def test_assignment_helpers(graph1):
    asg = Assignment.from_mapping({"2": True, "3": False, "5": True})
    assert asg.remote == {"2", "5"}
    assert Assignment.from_mask(graph1, asg.mask(graph1)) == asg
    assert asg.as_dict(graph1)["5"] and not asg.as_dict(graph1)["1"]
    assert str(asg) == "{2,5}"
    with pytest.raises(ValueError):
        Assignment({"1"}).validate(graph1)


def test_residual_latency_all_local_is_zero(graph1):
    cc = ComputeConfig(latency_budget_seconds=all_local_time(graph1, ComputeConfig()))
    assert residual_latency(graph1, Assignment(), cc) == 0.0


def test_residual_latency_one_vertex_remote():
    g = chain(2, cycles=[0.0, 1e7])
    cc = ComputeConfig(1e8, 1e10, all_local_time(g, ComputeConfig()))
    assert residual_latency(g, Assignment({"2"}), cc) == pytest.approx(0.099, rel=1e-14)


def test_residual_latency_counts_downlink_decode():
    g = chain(3, cycles=[1e7, 1e7, 1e7], gamma=0.01)
    cc = ComputeConfig(1e8, 1e10, 1.0)
    # 2 remote, 3 local: uplink (1,2), downlink (2,3)
    expected = 1.0 - (0.1 + 1e7 / 1e10 + 0.1) - 0.01
    assert residual_latency(g, Assignment({"2"}), cc) == pytest.approx(expected, rel=1e-14)


def test_residual_latency_full_offload_limit(graph1):
    cc = ComputeConfig(1e8, 1e20, 5.0)
    remote = Assignment(frozenset(graph1.offloadable_ids))
    local_only = graph1.vertex("1").cycles / 1e8
    assert residual_latency(graph1, remote, cc) == pytest.approx(5.0 - local_only, rel=1e-12)


# -- feasibility --------------------------------------------------------------------

def _ts(g, asg):
    return transfer_sets(g, asg)


def test_gain_threshold_unit_case():
    g = chain(2, kb=1 / (1e-6 * math.log(2)) / 8192)
    rc = RadioConfig(power_budget_w=1.0)
    rec = feasibility_single(_ts(g, Assignment({"2"})), 1.0, 10.0, rc)
    assert rec.gain_threshold == pytest.approx(math.e - 1, rel=1e-12)
    assert rec.feasible
    assert not feasibility_single(_ts(g, Assignment({"2"})), 1.0, 1.7, rc).feasible


def test_nonpositive_residual_is_infeasible():
    g = chain(2)
    ts = _ts(g, Assignment({"2"}))
    for L in (0.0, -1.0):
        assert not feasibility_single(ts, L, 1e12, RadioConfig()).feasible


def test_doubling_budget_halves_threshold():
    g = chain(2)
    ts = _ts(g, Assignment({"2"}))
    a1 = feasibility_single(ts, 0.5, 1.0, RadioConfig(power_budget_w=0.01)).gain_threshold
    a2 = feasibility_single(ts, 0.5, 1.0, RadioConfig(power_budget_w=0.02)).gain_threshold
    assert a2 == pytest.approx(a1 / 2, rel=1e-14)


def test_empty_uplink_accepts_zero_residual():
    rec = feasibility_single(TransferSets((), ()), 0.0, 1.0, RadioConfig())
    assert rec.feasible
    assert not feasibility_single(TransferSets((), ()), -1e-12, 1.0, RadioConfig()).feasible


# -- rate allocation -----------------------------------------------------------------

def test_single_edge_closed_form():
    n, a, L, P = 1.3, 400.0, 0.8, 0.05
    alloc = solve_p2([n], a, L, P)
    assert alloc.rates[0] == pytest.approx(n / L, rel=1e-9)
    assert alloc.powers[0] == pytest.approx(math.expm1(n / L) / a, rel=1e-8)
    assert energy_of([n], alloc) == pytest.approx(oracles.grid_single([n], a, L, P), rel=1e-8)


def test_two_edges_equal_rates():
    n, a, L, P = [0.7, 1.9], 300.0, 1.1, 0.05
    alloc = solve_p2(n, a, L, P)
    assert alloc.rates == pytest.approx([sum(n) / L] * 2, rel=1e-9)
    assert energy_of(n, alloc) == pytest.approx(oracles.grid_single(n, a, L, P), rel=1e-7)


def test_below_threshold_rejected():
    n, L, P = [1.0, 2.0], 1.0, 0.01
    a_bar = oracles.gain_threshold(n, L, P)
    with pytest.raises(InfeasibleError):
        solve_p2(n, a_bar * (1 - 1e-6), L, P)
    solve_p2(n, a_bar * (1 + 1e-9), L, P)


def test_unchecked_saturates_at_full_power():
    n, L, P = [1.0], 1.0, 0.01
    a = oracles.gain_threshold(n, L, P) / 2
    alloc = solve_p2(n, a, L, P, check=False)
    assert alloc.powers[0] == pytest.approx(P, rel=1e-12)
    assert delay_of(n, alloc) > L


def test_loose_budget_stays_at_full_power_boundary():
    # a exactly at the threshold: the only feasible point is full power
    n, L, P = [0.4, 0.6], 1.0, 0.01
    a = oracles.gain_threshold(n, L, P)
    alloc = solve_p2(n, a, L, P)
    assert alloc.powers == pytest.approx([P, P], rel=1e-9)


def test_empty_uplink():
    alloc = solve_p2([], 10.0, 1.0, 0.01)
    assert alloc.rates.size == 0 and alloc.iterations == 0


def test_per_edge_gains_satisfy_kkt():
    n, a, L, P = np.array([0.5, 1.0, 0.8]), np.array([100.0, 400.0, 250.0]), 1.0, 0.05
    alloc = solve_p2(n, a, L, P)
    t = alloc.rates
    assert delay_of(n, alloc) == pytest.approx(L, rel=1e-8)
    # stationarity e^t (t - 1) + 1 = lam a, or <= lam a at the power cap
    h = np.exp(t) * (t - 1) + 1
    capped = np.isclose(t, np.log1p(a * P), rtol=1e-12)
    assert capped.tolist() == [True, False, False]
    assert h[~capped] / a[~capped] == pytest.approx([alloc.multiplier] * 2, rel=1e-6)
    assert np.all(h[capped] / a[capped] <= alloc.multiplier)
    # stronger channel gets the higher rate
    assert t[1] > t[2] > t[0]


def test_per_edge_gains_match_grid():
    n, a, L, P = [0.6, 0.9], np.array([120.0, 500.0]), 1.2, 0.05
    alloc = solve_p2(n, a, L, P)
    t1 = np.linspace(n[0] / L * 1.0000001, math.log1p(a[0] * P), 200001)
    t2 = n[1] / (L - n[0] / t1)
    ok = t2 <= math.log1p(a[1] * P)
    with np.errstate(over="ignore"):
        e = n[0] * np.expm1(t1) / (a[0] * t1) + n[1] * np.expm1(t2) / (a[1] * t2)
    assert energy_of(n, alloc) == pytest.approx(float(e[ok].min()), rel=1e-7)
    assert energy_of(n, alloc) <= float(e[ok].min()) * (1 + 1e-8)


def test_complementary_slackness():
    rng = np.random.default_rng(3)
    for _ in range(200):
        n = rng.uniform(0.05, 2, rng.integers(1, 5))
        L = rng.uniform(0.2, 3)
        P = 0.01
        a = oracles.gain_threshold(n, L, P) * rng.uniform(1.001, 50)
        alloc = solve_p2(n, a, L, P)
        assert abs(alloc.multiplier * (delay_of(n, alloc) - L)) <= 1e-8
        assert delay_of(n, alloc) <= L
        assert np.all(alloc.powers > 0) and np.all(alloc.powers <= P * (1 + 1e-12))


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0.05, 3.0), min_size=1, max_size=4),
       st.floats(0.1, 5.0), st.floats(1.01, 100.0), st.floats(1.0, 4.0))
def test_energy_monotone_in_gain_and_latency(n, L, margin, factor):
    P = 0.02
    a = oracles.gain_threshold(n, L, P) * margin
    assume(math.isfinite(a))
    base = energy_of(n, solve_p2(n, a, L, P))
    assert energy_of(n, solve_p2(n, a * factor, L, P)) <= base * (1 + 1e-9)
    assert energy_of(n, solve_p2(n, a, L * factor, P)) <= base * (1 + 1e-9)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.05, 3.0), st.floats(0.1, 5.0), st.floats(0.01, 1e4),
       st.floats(1.0, 3.0), st.floats(1.0, 3.0), st.floats(1.0, 3.0))
def test_feasibility_monotone(n, L, a, fa, fp, fl):
    g = chain(2, kb=n / (1e-6 * math.log(2)) / 8192)
    ts = _ts(g, Assignment({"2"}))
    rc, rc2 = RadioConfig(power_budget_w=0.01), RadioConfig(power_budget_w=0.01 * fp)
    if feasibility_single(ts, L, a, rc).feasible:
        assert feasibility_single(ts, L * fl, a * fa, rc2).feasible


# -- whole-partition evaluation -----------------------------------------------------------

def test_evaluate_all_local(graph1):
    cc = ComputeConfig(latency_budget_seconds=all_local_time(graph1, ComputeConfig()))
    sol = evaluate_partition_single(graph1, Assignment(), 500.0, RadioConfig(), cc)
    assert sol.status == OPTIMAL
    assert sol.total_energy_j == all_local_energy(graph1)
    assert sol.total_delay_s == all_local_time(graph1, cc)
    tight = ComputeConfig(latency_budget_seconds=all_local_time(graph1, ComputeConfig()) * 0.999)
    assert evaluate_partition_single(graph1, Assignment(), 500.0, RadioConfig(), tight).status == INFEASIBLE


def test_evaluate_one_edge_closed_form():
    g = chain(3, energies=[0.3, 2.0, 1.0], cycles=[1e7, 5e7, 2e7], kb=40)
    cc = ComputeConfig(1e8, 1e10, all_local_time(g, ComputeConfig()))
    rc = RadioConfig(power_budget_w=0.05)
    asg = Assignment({"2", "3"})
    sol = evaluate_partition_single(g, asg, 300.0, rc, cc)
    n = effective_bits(40 * 8192, rc)
    L = residual_latency(g, asg, cc)
    expected = 0.3 + oracles.equal_rate_energy([n], 300.0, L)
    assert sol.status == OPTIMAL
    assert sol.total_energy_j == pytest.approx(expected, rel=1e-9)
    assert sol.total_delay_s == pytest.approx(cc.latency_budget_seconds, rel=1e-9)
    assert sol.bits_per_symbol[("1", "2")] == pytest.approx(sol.rate_nats[("1", "2")] / math.log(2))


def test_graph1_full_offload_beats_all_local(graph1):
    cc = ComputeConfig(latency_budget_seconds=all_local_time(graph1, ComputeConfig()))
    rc = RadioConfig(power_budget_w=0.01)
    full = evaluate_partition_single(graph1, Assignment(frozenset(graph1.offloadable_ids)), 500.0, rc, cc)
    assert full.status == OPTIMAL
    assert full.total_energy_j < all_local_energy(graph1)
    assert 0 < full.power_w[("1", "2")] <= 0.01


def test_evaluate_infeasible_partition(graph1):
    cc = ComputeConfig(latency_budget_seconds=all_local_time(graph1, ComputeConfig()))
    sol = evaluate_partition_single(graph1, Assignment({"2"}), 1e-3, RadioConfig(), cc)
    assert sol.status == INFEASIBLE and math.isinf(sol.total_energy_j)
    assert ALL_LOCAL != OPTIMAL
