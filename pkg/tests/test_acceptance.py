"""Acceptance criteria 1-9, one PASS/FAIL line each (shown in the pytest summary)."""

import filecmp
import math
import subprocess
import sys
import time
from dataclasses import replace

import numpy as np
import pytest

import oracles
from conftest import record_acceptance
from jointoffload.backward import bi_optimize
from jointoffload.experiments import (
    draw_gains,
    load_scenario,
    run_distance_sweep,
    run_nmax_sweep,
    run_trials,
    shipped_path,
    trial_graph,
)
from jointoffload.graph import all_local_energy
from jointoffload.multi_solver import min_power_for_rate, solve_p4, waterfill
from jointoffload.radio import energy_single
from jointoffload.search import optimize
from jointoffload.single_solver import solve_p2

pytestmark = pytest.mark.acceptance


def report(number: int, ok: bool, detail: str) -> None:
    record_acceptance(f"criterion {number}: {'PASS' if ok else 'FAIL'} {detail}")
    assert ok, detail


def multi_energy(n, alloc):
    return math.fsum(ni * float(p.sum()) / float(t.sum()) for ni, p, t in zip(n, alloc.powers, alloc.rates))


def random_single(rng, edges):
    n = rng.uniform(0.05, 3.0, edges)
    L = rng.uniform(0.2, 5.0)
    P = rng.choice([0.01, 0.02, 0.1, 1.0])
    a = oracles.gain_threshold(n, L, P) * rng.uniform(1.001, 50.0)
    return n, a, L, P


def random_multi(rng, edges, K, slack=(0.2, 0.9)):
    a = rng.uniform(2.0, 500.0, K)
    n = rng.uniform(0.05, 2.0, edges)
    P = rng.choice([0.01, 0.02, 0.1])
    L = n.sum() / (waterfill(a, P).rate_nats * rng.uniform(*slack))
    return n, a, L, P


def test_criterion_1_closed_form():
    rng = np.random.default_rng(101)
    instances = [random_single(rng, int(rng.integers(1, 5))) for _ in range(1000)]
    start = time.perf_counter()
    worst = 0.0
    for n, a, L, P in instances:
        alloc = solve_p2(n, a, L, P)
        energy = math.fsum(n * alloc.powers / alloc.rates)
        worst = max(worst, abs(energy / oracles.equal_rate_energy(n, a, L) - 1))
    elapsed = time.perf_counter() - start
    report(1, worst < 1e-6 and elapsed < 5.0,
           f"1000 instances, max rel err {worst:.2e} (< 1e-6), {elapsed:.2f} s (< 5 s)")


def test_criterion_2_grid_search():
    rng = np.random.default_rng(202)
    start = time.perf_counter()
    worst_single = worst_multi = 0.0
    for _ in range(50):
        n, a, L, P = random_single(rng, int(rng.integers(1, 3)))
        alloc = solve_p2(n, a, L, P)
        energy = math.fsum(n * alloc.powers / alloc.rates)
        worst_single = max(worst_single, abs(energy / oracles.grid_single(n, a, L, P) - 1))
    for _ in range(50):
        n, a, L, P = random_multi(rng, int(rng.integers(1, 3)), int(rng.integers(1, 4)))
        energy = multi_energy(n, solve_p4(n, a, L, P))
        worst_multi = max(worst_multi, abs(energy / oracles.grid_multi(n, a, L, P) - 1))
    elapsed = time.perf_counter() - start
    ok = max(worst_single, worst_multi) < 1e-4 and elapsed < 120
    report(2, ok, f"100 instances, max rel err single {worst_single:.2e} multi {worst_multi:.2e} "
                  f"(< 1e-4), {elapsed:.1f} s (< 120 s)")


def _bisect_log(feasible, lo, hi, rounds=200):
    assert not feasible(lo) and feasible(hi)
    for _ in range(rounds):
        mid = math.sqrt(lo * hi)
        if feasible(mid):
            hi = mid
        else:
            lo = mid
        if hi / lo - 1 < 1e-13:
            break
    return hi


def test_criterion_3_boundary():
    rng = np.random.default_rng(303)
    worst_single = worst_multi = 0.0
    for _ in range(50):
        n = rng.uniform(0.05, 3.0, int(rng.integers(1, 5)))
        L, P = rng.uniform(0.3, 5.0), rng.choice([0.01, 0.1, 1.0])

        def solver_meets_deadline(a):
            alloc = solve_p2(n, a, L, P, check=False)
            return math.fsum(n / alloc.rates) <= L * (1 + 1e-12)

        threshold = oracles.gain_threshold(n, L, P)
        found = _bisect_log(solver_meets_deadline, threshold / 10, threshold * 10)
        worst_single = max(worst_single, abs(found / threshold - 1))
    for _ in range(50):
        a = rng.uniform(0.5, 200.0, int(rng.integers(1, 9)))
        n = rng.uniform(0.05, 2.0, int(rng.integers(1, 4)))
        L, P = rng.uniform(0.3, 5.0), rng.choice([0.01, 0.1, 1.0])
        R = n.sum() / L

        def power_fits(s):
            return float(min_power_for_rate(s * a, R).sum()) <= P

        ref = oracles.waterfill_rate_root(a, R, P, 1e-6, 1e8)
        found = _bisect_log(power_fits, ref / 10, ref * 10)
        worst_multi = max(worst_multi, abs(found / ref - 1))
    ok = max(worst_single, worst_multi) < 1e-6
    report(3, ok, f"boundary rel err single {worst_single:.2e} multi {worst_multi:.2e} (< 1e-6)")


def test_criterion_4_convexity():
    rng = np.random.default_rng(404)
    min_second = math.inf
    for _ in range(50):
        a, P, n = rng.uniform(0.5, 1e4), rng.choice([0.01, 0.1, 1.0]), rng.uniform(0.05, 3.0)
        t_max = math.log1p(a * P)
        t = np.linspace(t_max / 1000, t_max, 1000)
        f = energy_single(np.expm1(t) / a, a, n) / (n / a)
        second = (f[2:] - 2 * f[1:-1] + f[:-2]) / (t[1] - t[0]) ** 2
        min_second = min(min_second, float(second.min()))
    start = time.perf_counter()
    worst_spread = worst_ref = 0.0
    for _ in range(20):
        n, a, L, P = random_multi(rng, int(rng.integers(1, 4)), int(rng.integers(2, 5)), slack=(0.3, 0.8))
        starts = rng.uniform(0, P / a.size, (10, n.size, a.size))
        energies, _ = oracles.descend_multi(n, a, L, P, starts)
        worst_spread = max(worst_spread, float((energies.max() - energies.min()) / energies.min()))
        worst_ref = max(worst_ref, abs(float(energies.min()) / multi_energy(n, solve_p4(n, a, L, P)) - 1))
    elapsed = time.perf_counter() - start
    ok = min_second > 0 and worst_spread < 1e-5
    report(4, ok, f"min second difference {min_second:.3g} (> 0); 20 x 10-start descent spread "
                  f"{worst_spread:.2e} (< 1e-5), vs solver {worst_ref:.2e}, {elapsed:.0f} s")


def test_criterion_5_waterfill():
    res = waterfill([2.0, 1.0], 1.0)
    err = float(np.max(np.abs(res.powers - [0.75, 0.25])))
    rng = np.random.default_rng(505)
    counts_ok = all(waterfill(rng.uniform(0.01, 100, K), rng.uniform(0.01, 5)).iterations <= K
                    for K in rng.integers(1, 33, 500))
    ok = err <= 1e-12 and counts_ok and res.iterations <= 2
    report(5, ok, f"p = {res.powers.tolist()} (err {err:.1e} <= 1e-12), iterations {res.iterations} <= K=2; "
                  f"500 random K up to 32 within K iterations: {counts_ok}")


def test_criterion_6_backward_induction():
    s = load_scenario(shipped_path("fig8_bi"))
    outcomes = run_trials(s, bi=True)
    used = [(x, o) for (_, x), cell in outcomes.items() for o in cell if o is not None]
    instances = sum(len(cell) for cell in outcomes.values())
    never_better = all(o.bi_energy_j >= o.energy_j * (1 - 1e-12) for _, o in used)

    def gap(pairs):
        opt = math.fsum(o.energy_j for _, o in pairs)
        return (math.fsum(o.bi_energy_j for _, o in pairs) - opt) / opt

    overall = gap(used)
    low_cells = [x for (_, x), cell in outcomes.items()
                 if np.mean([o.offload_feasible for o in cell if o is not None]) < 0.5]
    low = [(x, o) for x, o in used if x in low_cells]
    low_gap = gap(low) if low else math.nan

    transitions_ok = True
    for trial in range(s.trials):
        g = trial_graph(s, trial)
        n = len(g.vertices)
        for d in s.sweep.values:
            radio = replace(s.radio, distance_m=float(d))
            rep = bi_optimize(g, draw_gains(s, trial, radio, s.fading), radio, s.compute_for(g))
            transitions_ok &= rep.transition_evaluations == 4 * (n - 1) + 1
    ok = (instances == 500 and never_better and overall < 0.15 and bool(low)
          and low_gap < 0.02 and transitions_ok)
    report(6, ok, f"{instances} instances, BI >= exhaustive: {never_better}; gap overall {overall:.2%} "
                  f"(< 15%), low-offload regime ({len(low_cells)} distances, {len(low)} trials) "
                  f"{low_gap:.2%} (< 2%); transitions 4(n-1)+1: {transitions_ok}")


def test_criterion_7_trends():
    start = time.perf_counter()
    fig2 = load_scenario(shipped_path("fig2_distance"))
    rows = run_distance_sweep(fig2)
    curves = {}
    for r in rows:
        curves.setdefault(r.series_value, []).append(r.mean_energy_j)
    monotone_d = all(np.all(np.diff(c) >= 0) for c in curves.values())
    ordered_m = bool(np.all(np.array(curves[4]) <= np.array(curves[2]))
                     and np.all(np.array(curves[2]) <= np.array(curves[1])))
    fig34 = load_scenario(shipped_path("fig34_nmax"))
    rows = run_nmax_sweep(fig34)
    frac = {}
    for r in rows:
        frac.setdefault(r.series_value, []).append(r.mean_feasible_fraction)
    low_p, high_p = (np.array(frac[p]) for p in sorted(frac))
    falls_n = bool(np.all(np.diff(low_p) <= 0) and np.all(np.diff(high_p) <= 0))
    rises_p = bool(np.all(high_p >= low_p))
    elapsed = time.perf_counter() - start
    ok = monotone_d and ordered_m and falls_n and rises_p and elapsed < 600
    report(7, ok, f"energy nondecreasing in d: {monotone_d}; M=4 <= M=2 <= M=1: {ordered_m}; "
                  f"feasible fraction nonincreasing in N_max: {falls_n}, nondecreasing in P_T: {rises_p}; "
                  f"{fig2.trials} trials, {elapsed:.1f} s (< 600 s)")


def test_criterion_8_face_recognition():
    s = load_scenario(shipped_path("face_recognition_scenario"))
    g = s.graph
    cc = s.compute_for(g)
    local_share = math.fsum(g.vertex(v).local_energy_joules for v in g.offloadable_ids)
    root_energy = all_local_energy(g) - local_share
    full = frozenset(g.offloadable_ids)
    transfers, full_count = [], 0
    for trial in range(s.trials):
        rep = optimize(g, draw_gains(s, trial, s.radio, s.fading), s.radio, cc, s.mode)
        if rep.best is None:
            continue
        transfers.append(rep.energy_j - root_energy)
        full_count += rep.assignment.remote == full
    share = full_count / len(transfers)
    median = float(np.median(transfers))
    ratio = local_share / median
    ok = share >= 0.9 and 5e-3 <= median <= 0.1 and ratio >= 100
    report(8, ok, f"{len(transfers)}/{s.trials} feasible, full offload {share:.1%} (>= 90%), median transfer "
                  f"energy {median * 1e3:.1f} mJ (in [5, 100]), gain {ratio:.0f}x over {local_share:.1f} J (>= 100x)")


CLI_RUNS = [
    ["solve", "--scenario", "face_recognition_scenario", "--seed", "11"],
    ["solve", "--scenario", "example1", "--gains", "500", "--method", "bi"],
    ["sweep-distance", "--scenario", "fig2_distance", "--trials", "20"],
    ["sweep-nmax", "--scenario", "fig34_nmax", "--trials", "20"],
    ["compare-bi", "--scenario", "fig8_bi", "--trials", "10"],
    ["feasible-fraction", "--scenario", "fig34_nmax", "--trials", "20"],
    ["feasible-fraction", "--scenario", "example1", "--gains", "300"],
]


def test_criterion_9_determinism(tmp_path):
    identical = []
    for i, argv in enumerate(CLI_RUNS):
        paths = []
        for rep, workers in enumerate(("1", "1", "2")):
            out = tmp_path / f"run{i}_{rep}.csv"
            subprocess.run([sys.executable, "-m", "jointoffload", *argv, "--workers", workers,
                            "--out", str(out)], check=True)
            paths.append(out)
        identical.append(all(filecmp.cmp(paths[0], p, shallow=False) for p in paths[1:])
                         and paths[0].stat().st_size > 0)
    verbs = sorted({argv[0] for argv in CLI_RUNS})
    report(9, all(identical), f"{sum(identical)}/{len(CLI_RUNS)} invocations byte-identical over 3 runs "
                              f"(workers 1, 1, 2) covering {', '.join(verbs)}")
