"""Estimator-style front end: fit a call graph, predict partitions for channels.

``fit`` does the channel-independent work (the partition table); each row
of the matrix passed to ``predict`` is one channel state, a single gain in
single-channel mode or ``K`` subchannel gains in multi-channel mode.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .backward import bi_optimize
from .graph import CallGraph, ComputeConfig, all_local_time
from .radio import RadioConfig
from .search import PartitionTable, SearchReport, check_mode, optimize

__all__ = ["OffloadingOptimizer"]

STRATEGIES = ("exhaustive", "backward_induction")


class OffloadingOptimizer(BaseEstimator):
    """Joint partition and power allocation for one call graph.

    Parameters
    ----------
    radio : RadioConfig, optional
        Physical-layer settings; defaults to ``RadioConfig()``.
    compute : ComputeConfig, optional
        CPU speeds and latency budget. When omitted the budget is the
        all-local execution time of the fitted graph.
    mode : {"single", "multi"}
    strategy : {"exhaustive", "backward_induction"}
    bound : bool
        Skip partitions whose energy lower bound exceeds the incumbent
        (exhaustive strategy only; the result is unchanged).

    Attributes
    ----------
    graph_ : CallGraph
    compute_ : ComputeConfig
    table_ : PartitionTable
    n_offloadable_ : int
    """

    def __init__(self, radio: RadioConfig | None = None, compute: ComputeConfig | None = None,
                 mode: str = "single", strategy: str = "exhaustive", bound: bool = True):
        self.radio = radio
        self.compute = compute
        self.mode = mode
        self.strategy = strategy
        self.bound = bound

    def fit(self, graph: CallGraph, y=None):
        if not isinstance(graph, CallGraph):
            raise TypeError(f"expected a CallGraph, got {type(graph).__name__}")
        check_mode(self.mode)
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        radio = self.radio if self.radio is not None else RadioConfig()
        compute = self.compute
        if compute is None:
            compute = ComputeConfig()
            compute = replace(compute, latency_budget_seconds=all_local_time(graph, compute))
        self.graph_ = graph
        self.radio_ = radio
        self.compute_ = compute
        self.table_ = PartitionTable(graph, radio, compute)
        self.n_offloadable_ = len(graph.offloadable_ids)
        return self

    def _gains(self, G) -> np.ndarray:
        check_is_fitted(self, "table_")
        G = check_array(G, dtype=np.float64, ensure_all_finite=True)
        if np.any(G <= 0):
            raise ValueError("channel gains must be positive")
        if self.mode == "single" and G.shape[1] != 1:
            raise ValueError(f"single-channel mode takes one gain per row, got {G.shape[1]}")
        return G

    def solve(self, gains) -> SearchReport:
        """Full report for one channel state."""
        row = self._gains(np.atleast_2d(np.asarray(gains, dtype=float)))
        if row.shape[0] != 1:
            raise ValueError("solve takes a single channel state")
        if self.strategy == "backward_induction":
            return bi_optimize(self.graph_, row[0], self.radio_, self.compute_, self.mode)
        return optimize(self.graph_, row[0], self.radio_, self.compute_, self.mode,
                        table=self.table_, bound=self.bound)

    def predict(self, G) -> np.ndarray:
        """Chosen partition of each row as a bitmask over the sorted offloadable ids.

        Rows with no feasible partition get ``-1``.
        """
        G = self._gains(G)
        out = np.empty(G.shape[0], dtype=np.int64)
        for i, row in enumerate(G):
            report = self.solve(row)
            out[i] = -1 if report.assignment is None else report.assignment.mask(self.graph_)
        return out

    def predict_energy(self, G) -> np.ndarray:
        """Minimum handset energy per row (``inf`` when nothing is feasible)."""
        G = self._gains(G)
        return np.array([self.solve(row).energy_j for row in G])

    def feasible_fraction(self, G) -> np.ndarray:
        """Share of partitions passing the feasibility test, per row."""
        G = self._gains(G)
        P_T = self.radio_.power_budget_w
        return np.array([np.count_nonzero(self.table_.feasible(row, self.mode, P_T)) / self.table_.size
                         for row in G])
