"""Joint computation offloading and radio resource allocation.

Pick which procedures of a call graph run on a nearby server and how much
power each state transfer uses, so the handset spends the least energy
while the program still finishes within its latency budget.
"""

from .backward import BLOCKED, bi_edge_cost, bi_optimize, bi_transitions, cheapest_path
from .estimator import OffloadingOptimizer
from .experiments import (
    Scenario,
    ScenarioError,
    SweepRow,
    emit_csv,
    load_scenario,
    run_bi_comparison,
    run_distance_sweep,
    run_feasible_fraction,
    run_nmax_sweep,
    shipped_path,
)
from .graph import (
    CallGraph,
    ComputeConfig,
    Edge,
    GraphError,
    GraphFormatError,
    Vertex,
    all_local_energy,
    all_local_time,
    load_call_graph,
    parse_call_graph,
    sequential_order,
)
from .multi_solver import (
    SolutionMulti,
    evaluate_partition_multi,
    feasibility_multi,
    min_power_for_rate,
    solve_p4,
    waterfill,
)
from .radio import FadingModel, RadioConfig, effective_bits, normalized_gain, sample_fading, snr_gap
from .search import PartitionTable, SearchReport, enumerate_assignments, feasible_fraction, optimize
from .single_solver import (
    Assignment,
    InfeasibleError,
    SolutionSingle,
    evaluate_partition_single,
    feasibility_single,
    residual_latency,
    solve_p2,
    transfer_sets,
)

__all__ = [
    "all_local_energy",
    "all_local_time",
    "Assignment",
    "bi_edge_cost",
    "bi_optimize",
    "bi_transitions",
    "BLOCKED",
    "CallGraph",
    "cheapest_path",
    "ComputeConfig",
    "Edge",
    "effective_bits",
    "emit_csv",
    "enumerate_assignments",
    "evaluate_partition_multi",
    "evaluate_partition_single",
    "FadingModel",
    "feasibility_multi",
    "feasibility_single",
    "feasible_fraction",
    "GraphError",
    "GraphFormatError",
    "InfeasibleError",
    "load_call_graph",
    "load_scenario",
    "min_power_for_rate",
    "normalized_gain",
    "OffloadingOptimizer",
    "optimize",
    "parse_call_graph",
    "PartitionTable",
    "RadioConfig",
    "residual_latency",
    "run_bi_comparison",
    "run_distance_sweep",
    "run_feasible_fraction",
    "run_nmax_sweep",
    "sample_fading",
    "Scenario",
    "ScenarioError",
    "SearchReport",
    "sequential_order",
    "shipped_path",
    "snr_gap",
    "SolutionMulti",
    "SolutionSingle",
    "solve_p2",
    "solve_p4",
    "SweepRow",
    "transfer_sets",
    "Vertex",
    "waterfill",
]

__version__ = "0.1.0"
