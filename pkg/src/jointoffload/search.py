"""Exhaustive partition search with feasibility pruning.

Every assignment of the offloadable procedures is encoded as a bitmask:
bit ``i`` set means the i-th offloadable id (sorted) runs remotely. The
quantities that do not depend on the channel (uplink load, residual latency,
fixed energies) are computed once per graph in a :class:`PartitionTable`;
a channel draw then only needs the threshold comparison to discard
partitions, and the convex power allocation runs on the survivors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .graph import CallGraph, ComputeConfig, all_local_time
from .multi_solver import evaluate_partition_multi, min_power_for_rate, waterfill
from .radio import RadioConfig, effective_bits
from .single_solver import (
    ALL_LOCAL,
    INFEASIBLE,
    OPTIMAL,
    Assignment,
    evaluate_partition_single,
    solve_p2,
)

__all__ = [
    "MAX_OFFLOADABLE",
    "PartitionTable",
    "SearchReport",
    "enumerate_assignments",
    "feasible_fraction",
    "optimize",
]

MAX_OFFLOADABLE = 20
MODES = ("single", "multi")


@dataclass
class SearchReport:
    best: object | None
    assignment: Assignment | None
    status: str
    evaluated_count: int
    feasible_count: int
    total_count: int
    method: str = "exhaustive"
    transition_evaluations: int | None = None
    heuristic_cost: float | None = None

    @property
    def feasible_fraction(self) -> float:
        return self.feasible_count / self.total_count

    @property
    def energy_j(self) -> float:
        return self.best.total_energy_j if self.best is not None else math.inf


def _check_size(g: CallGraph) -> int:
    n = len(g.offloadable_ids)
    if n > MAX_OFFLOADABLE:
        raise ValueError(f"{n} offloadable vertices; exhaustive search is capped at {MAX_OFFLOADABLE}")
    return n


def enumerate_assignments(g: CallGraph) -> Iterator[Assignment]:
    """All ``2**n`` assignments in binary-counter order over the sorted offloadable ids."""
    n = _check_size(g)
    for mask in range(1 << n):
        yield Assignment.from_mask(g, mask)


def check_mode(mode: str) -> str:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    return mode


def channel_gains(channel, mode: str) -> np.ndarray:
    gains = np.atleast_1d(np.asarray(channel, dtype=float))
    if gains.ndim != 1 or gains.size == 0:
        raise ValueError("channel must be a nonempty vector of gains")
    if np.any(gains <= 0) or not np.all(np.isfinite(gains)):
        raise ValueError("channel gains must be positive and finite")
    if mode == "single" and gains.size != 1:
        raise ValueError(f"single-channel mode takes one gain, got {gains.size}")
    return gains


class PartitionTable:
    """Channel-independent data of every partition of ``g``.

    Attributes (arrays indexed by bitmask)
    ----------------------------------------
    n_eff : total effective bits on uplink edges.
    residual : latency left for uplink transfers.
    base_energy : local execution plus downlink decoding energy.
    has_uplink : whether any edge goes from a local to a remote procedure.
    n_remote : number of remote procedures.
    """

    def __init__(self, g: CallGraph, rc: RadioConfig, cc: ComputeConfig):
        n = _check_size(g)
        self.graph, self.radio, self.compute = g, rc, cc
        self.size = 1 << n
        masks = np.arange(self.size, dtype=np.int64)
        bits = ((masks[:, None] >> np.arange(n)) & 1).astype(bool)
        remote = np.zeros((self.size, len(g.vertices)), dtype=bool)
        for i, vid in enumerate(g.offloadable_ids):
            remote[:, g.vertex_position(vid)] = bits[:, i]
        src = [g.vertex_position(e.source) for e in g.edges]
        dst = [g.vertex_position(e.target) for e in g.edges]
        self.uplink = ~remote[:, src] & remote[:, dst]
        downlink = remote[:, src] & ~remote[:, dst]

        edge_n_eff = np.array([effective_bits(e.state_bits, rc) for e in g.edges])
        eps = np.array([e.return_decode_energy_joules for e in g.edges])
        gam = np.array([e.return_decode_time_seconds for e in g.edges])
        cycles = np.array([v.cycles for v in g.vertices])
        energy = np.array([v.local_energy_joules for v in g.vertices])
        self.edge_n_eff = edge_n_eff

        self.n_eff = self.uplink.astype(float) @ edge_n_eff if g.edges else np.zeros(self.size)
        saved = remote.astype(float) @ cycles * (1.0 / cc.f_local_hz - 1.0 / cc.f_server_hz)
        decode = downlink.astype(float) @ gam if g.edges else np.zeros(self.size)
        self.residual = cc.latency_budget_seconds - (all_local_time(g, cc) - saved) - decode
        eps_sum = downlink.astype(float) @ eps if g.edges else np.zeros(self.size)
        self.base_energy = (~remote).astype(float) @ energy + eps_sum
        self.has_uplink = self.uplink.any(axis=1)
        self.n_remote = bits.sum(axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            self.required_rate = np.where(
                self.has_uplink,
                np.where(self.residual > 0, self.n_eff / self.residual, np.inf),
                0.0,
            )

    def compatible(self, rc: RadioConfig, cc: ComputeConfig) -> bool:
        return (self.compute == cc
                and self.radio.bit_duration_s == rc.bit_duration_s
                and self.radio.packet_error_rate == rc.packet_error_rate)

    def gain_threshold(self, P_T: float) -> np.ndarray:
        """Smallest single-channel gain making each partition feasible."""
        with np.errstate(over="ignore"):
            return np.expm1(self.required_rate) / P_T

    def feasible(self, gains: np.ndarray, mode: str, P_T: float) -> np.ndarray:
        no_uplink_ok = ~self.has_uplink & (self.residual >= 0)
        if mode == "single":
            ok = self.has_uplink & (self.residual > 0) & (gains[0] >= self.gain_threshold(P_T))
        else:
            best_rate = waterfill(gains, P_T).rate_nats
            ok = self.has_uplink & (self.residual > 0) & (best_rate >= self.required_rate)
        return no_uplink_ok | ok

    def uplink_n_eff(self, mask: int) -> np.ndarray:
        return self.edge_n_eff[self.uplink[mask]]

    def transfer_energy(self, mask: int, gains: np.ndarray, mode: str, P_T: float) -> float:
        n = self.uplink_n_eff(mask)
        if mode == "single":
            alloc = solve_p2(n, gains[0], self.residual[mask], P_T)
            return math.fsum(n * alloc.powers / alloc.rates)
        R = math.fsum(n) / self.residual[mask]
        p = min_power_for_rate(gains, R, P_T)
        return math.fsum(n) * float(p.sum()) / float(np.sum(np.log1p(gains * p)))


def _table(g, rc, cc, table):
    if table is None:
        return PartitionTable(g, rc, cc)
    if table.graph is not g and table.graph != g:
        raise ValueError("partition table was built for another graph")
    if not table.compatible(rc, cc):
        raise ValueError("partition table was built for other radio/compute settings")
    return table


def feasible_fraction(g: CallGraph, channel, rc: RadioConfig, cc: ComputeConfig,
                      mode: str = "single", table: PartitionTable | None = None) -> float:
    """Share of the ``2**n`` partitions passing the closed-form feasibility test."""
    check_mode(mode)
    t = _table(g, rc, cc, table)
    ok = t.feasible(channel_gains(channel, mode), mode, rc.power_budget_w)
    return float(np.count_nonzero(ok)) / t.size


def evaluate(g: CallGraph, asg: Assignment, gains, rc: RadioConfig, cc: ComputeConfig, mode: str):
    if mode == "single":
        return evaluate_partition_single(g, asg, float(np.asarray(gains).ravel()[0]), rc, cc)
    return evaluate_partition_multi(g, asg, gains, rc, cc)


def optimize(g: CallGraph, channel, rc: RadioConfig, cc: ComputeConfig,
             mode: str = "single", table: PartitionTable | None = None,
             bound: bool = True) -> SearchReport:
    """Globally optimal partition and powers for one channel state.

    1. discard partitions failing the closed-form feasibility test;
    2. solve the power allocation of every surviving partition;
    3. keep the least energy, ties going to fewer remote procedures and then
       to the smallest indicator vector.

    With ``bound=True`` a partition is skipped in step 2 when its energy
    lower bound (fixed energy plus ``n_eff / max(a)``; transfers never cost
    less) already exceeds the incumbent. The result is unchanged.
    """
    check_mode(mode)
    gains = channel_gains(channel, mode)
    t = _table(g, rc, cc, table)
    P_T = rc.power_budget_w
    ok = t.feasible(gains, mode, P_T)
    candidates = np.flatnonzero(ok)
    feasible_count = int(candidates.size)
    if feasible_count == 0:
        return SearchReport(None, None, INFEASIBLE, 0, 0, t.size)

    lower = t.base_energy[candidates] + t.n_eff[candidates] / gains.max()
    order = candidates[np.lexsort((candidates, lower))]
    ids = g.offloadable_ids
    best_mask, best_energy, evaluated = -1, math.inf, 0

    def tie_key(mask):
        return (int(t.n_remote[mask]), tuple(int(mask >> i & 1) for i in range(len(ids))))

    for mask in order.tolist():
        if bound and t.has_uplink[mask] and t.base_energy[mask] + t.n_eff[mask] / gains.max() >= best_energy:
            continue
        evaluated += 1
        energy = float(t.base_energy[mask])
        if t.has_uplink[mask]:
            energy += t.transfer_energy(mask, gains, mode, P_T)
        if energy < best_energy or (energy == best_energy and tie_key(mask) < tie_key(best_mask)):
            best_mask, best_energy = mask, energy

    asg = Assignment.from_mask(g, best_mask)
    best = evaluate(g, asg, gains, rc, cc, mode)
    status = ALL_LOCAL if not asg.remote else OPTIMAL
    if best.status == OPTIMAL:
        best.status = status
    return SearchReport(best, asg, status, evaluated, feasible_count, t.size)
