"""Backward-induction partitioning over a sequentialized call graph.

Procedures are visited in :func:`~jointoffload.graph.sequential_order`. At
each step the handset is in one of two states, ``local`` or ``remote``, and
moving between steps costs:

============  ============  ==============================================
previous      next          energy
============  ============  ==============================================
local         local         local execution ``E_v``
local         remote        transfer over the invoking edge, solved alone
remote        remote        nothing
remote        local         ``E_v`` plus decoding the returned state
============  ============  ==============================================

The transfer over edge ``(u, v)`` is priced by solving the power allocation
for that edge alone with the latency budget ``w_v / f_l`` (the time ``v``
would take on the handset). When no allocation fits, the transition is
blocked. The cheapest path is found by backward induction and the resulting
partition is re-solved exactly under the full latency budget.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .graph import CallGraph, ComputeConfig, Edge, sequential_order
from .multi_solver import min_power_for_rate
from .radio import RadioConfig, effective_bits
from .search import SearchReport, channel_gains, check_mode, evaluate
from .single_solver import ALL_LOCAL, INFEASIBLE, OPTIMAL, Assignment, InfeasibleError, solve_p2

__all__ = [
    "BLOCKED",
    "BiTransition",
    "bi_edge_cost",
    "bi_optimize",
    "bi_transitions",
    "cheapest_path",
]

LOCAL, REMOTE = "local", "remote"
LOCATIONS = (LOCAL, REMOTE)


class _Blocked:
    """Marker for a transfer that no power allocation can complete in time."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "BLOCKED"

    def __bool__(self):
        return False


BLOCKED = _Blocked()


@dataclass(frozen=True)
class BiTransition:
    step: int
    vertex: str
    prev_location: str
    next_location: str
    energy_j: float | None
    feasible: bool


def bi_edge_cost(g: CallGraph, edge: Edge, channel, rc: RadioConfig, cc: ComputeConfig,
                 mode: str = "single"):
    """Energy to ship the state of ``edge`` within ``w_v / f_l``, or ``BLOCKED``."""
    gains = channel_gains(channel, mode)
    budget = g.vertex(edge.target).cycles / cc.f_local_hz
    if budget <= 0:
        return BLOCKED
    n = effective_bits(edge.state_bits, rc)
    try:
        if mode == "single":
            alloc = solve_p2([n], gains[0], budget, rc.power_budget_w)
            return float(n * alloc.powers[0] / alloc.rates[0])
        p = min_power_for_rate(gains, n / budget, rc.power_budget_w)
    except InfeasibleError:
        return BLOCKED
    return n * float(p.sum()) / float(np.sum(np.log1p(gains * p)))


def _invoking_edge(g: CallGraph, vid: str, position: dict) -> Edge | None:
    # the caller executed most recently before v
    callers = [u for u in g.predecessors(vid) if position[u] < position[vid]]
    if not callers:
        return None
    return g.edge(max(callers, key=position.__getitem__), vid)


def bi_transitions(g: CallGraph, channel, rc: RadioConfig, cc: ComputeConfig,
                   mode: str = "single") -> list[BiTransition]:
    """Every transition of the induction tree, ``4 (n - 1) + 1`` of them."""
    check_mode(mode)
    order = sequential_order(g)
    position = {v: i for i, v in enumerate(order)}
    root = g.vertex(order[0])
    out = [BiTransition(0, root.id, LOCAL, LOCAL, root.local_energy_joules, True)]
    for step, vid in enumerate(order[1:], start=1):
        v = g.vertex(vid)
        edge = _invoking_edge(g, vid, position)
        offload = None
        for prev in LOCATIONS:
            for nxt in LOCATIONS:
                if nxt == REMOTE and not v.offloadable:
                    energy = BLOCKED
                elif prev == nxt == LOCAL:
                    energy = v.local_energy_joules
                elif prev == nxt == REMOTE:
                    energy = 0.0
                elif nxt == REMOTE:
                    if offload is None:
                        offload = 0.0 if edge is None else bi_edge_cost(g, edge, channel, rc, cc, mode)
                    energy = offload
                else:
                    back = 0.0 if edge is None else edge.return_decode_energy_joules
                    energy = v.local_energy_joules + back
                feasible = energy is not BLOCKED
                out.append(BiTransition(step, vid, prev, nxt, energy if feasible else None, feasible))
    return out


def cheapest_path(transitions: list[BiTransition]) -> tuple[list[str], float]:
    """Minimum-energy location sequence by backward induction.

    ``value[s]`` holds the cheapest cost of finishing the program from the
    current step in location ``s``; steps are folded from the last to the
    first. Ties prefer staying local. Returns ``([], inf)`` when every
    sequence hits a blocked transition.
    """
    steps = max(t.step for t in transitions)
    by_step: dict[int, dict] = {}
    for t in transitions:
        by_step.setdefault(t.step, {})[(t.prev_location, t.next_location)] = t
    value = {LOCAL: 0.0, REMOTE: 0.0}
    choice: dict[int, dict] = {}
    for step in range(steps, 0, -1):
        new_value, pick = {}, {}
        for prev in LOCATIONS:
            best, arg = math.inf, None
            for nxt in LOCATIONS:
                t = by_step[step][(prev, nxt)]
                if not t.feasible:
                    continue
                cost = t.energy_j + value[nxt]
                if cost < best:
                    best, arg = cost, nxt
            new_value[prev], pick[prev] = best, arg
        value, choice[step] = new_value, pick
    root = by_step[0][(LOCAL, LOCAL)]
    if not math.isfinite(value[LOCAL]):
        return [], math.inf
    path = [LOCAL]
    for step in range(1, steps + 1):
        path.append(choice[step][path[-1]])
    return path, root.energy_j + value[LOCAL]


def bi_optimize(g: CallGraph, channel, rc: RadioConfig, cc: ComputeConfig,
                mode: str = "single") -> SearchReport:
    """Heuristic partition by backward induction, re-solved exactly.

    If the chosen partition misses the latency budget the all-local
    partition is used; if that also fails the report is infeasible.
    """
    gains = channel_gains(channel, mode)
    transitions = bi_transitions(g, gains, rc, cc, mode)
    path, path_cost = cheapest_path(transitions)
    order = sequential_order(g)
    # an empty path leaves every procedure local
    asg = Assignment(frozenset(v for v, loc in zip(order, path) if loc == REMOTE))
    total = 1 << len(g.offloadable_ids)
    tried = [asg] if not asg.remote else [asg, Assignment()]
    evaluated = feasible = 0
    for candidate in tried:
        sol = evaluate(g, candidate, gains, rc, cc, mode)
        evaluated += 1
        if sol.status != INFEASIBLE:
            feasible += 1
            status = OPTIMAL if candidate.remote else ALL_LOCAL
            sol.status = status
            return SearchReport(sol, candidate, status, evaluated, feasible, total,
                                method="backward_induction",
                                transition_evaluations=len(transitions),
                                heuristic_cost=path_cost)
    return SearchReport(None, None, INFEASIBLE, evaluated, 0, total,
                        method="backward_induction",
                        transition_evaluations=len(transitions),
                        heuristic_cost=path_cost)
