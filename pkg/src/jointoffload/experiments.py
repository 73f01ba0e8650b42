"""Scenario files and Monte Carlo sweeps over channel draws.

A scenario fixes a call graph, the radio and compute settings, the fading
model and a sweep axis. Every trial ``j`` owns a seed stream derived from
the master seed (``SeedSequence(seed, spawn_key=(j, ...))``): one child for
graph randomization and one per subchannel for fading. The streams do not
depend on the axis value or on the series value, so all cells of a sweep see
common random numbers and curves can be compared trial by trial.

Scenario document (JSON, unknown keys rejected)::

    {
      "comment": "free text",
      "graph": "graph1.json",          # relative to the scenario file
      "mode": "single",                # or "multi"
      "subchannels": 1,
      "fading": {"branches": 1, "mean_gain": 1.0},
      "radio": {"ber": 1e-3, "distance_m": 5.0, ...},
      "compute": {"f_local_hz": 1e8, "f_server_hz": 1e10,
                  "latency_budget_s": "all_local"},
      "random_graph": {"n_max_kb": 100, "w_max_cycles": 1e7},
      "trials": 200,
      "seed": 1,
      "sweep": {"axis": "distance", "values": [1, 2, 4]},
      "series": {"name": "branches", "values": [1, 2, 4]}
    }

``latency_budget_s`` may be a number or ``"all_local"`` (the all-local
execution time of the graph actually solved). ``random_graph`` redraws
every state size uniformly in ``(0, n_max_kb]`` KB and every cycle count
uniformly in ``(0, w_max_cycles]`` per trial; local energies and decode
costs keep their file values.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from importlib.resources import files
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .backward import bi_optimize
from .graph import (
    BITS_PER_KB,
    CallGraph,
    ComputeConfig,
    all_local_time,
    load_call_graph,
)
from .radio import FadingModel, RadioConfig, normalized_gain, sample_fading
from .search import PartitionTable, optimize

__all__ = [
    "ALL_LOCAL_BUDGET",
    "AXES",
    "Scenario",
    "ScenarioError",
    "SweepRow",
    "SERIES",
    "TrialOutcome",
    "draw_gains",
    "emit_csv",
    "format_rows",
    "format_value",
    "load_scenario",
    "randomize_graph",
    "run_bi_comparison",
    "run_distance_sweep",
    "run_feasible_fraction",
    "run_nmax_sweep",
    "run_trials",
    "scenario_from_dict",
    "shipped_path",
    "trial_graph",
]

ALL_LOCAL_BUDGET = "all_local"
AXES = ("distance", "n_max", "p_t")
SERIES = ("branches", "power_budget_w")
DEFAULT_TRIALS = 200

_TOP_KEYS = {"comment", "graph", "mode", "subchannels", "fading", "radio", "compute",
             "random_graph", "trials", "seed", "sweep", "series"}
_RADIO_KEYS = {f.name for f in fields(RadioConfig)}
_COMPUTE_KEYS = {"f_local_hz", "f_server_hz", "latency_budget_s"}


class ScenarioError(ValueError):
    """Raised for malformed or inconsistent scenario documents."""


@dataclass(frozen=True)
class Sweep:
    axis: str
    values: tuple[float, ...]


@dataclass(frozen=True)
class Series:
    name: str
    values: tuple


@dataclass(frozen=True)
class Scenario:
    """Everything needed to reproduce one experiment.

    ``latency_budget_s`` of ``None`` means the all-local execution time of
    each graph solved. ``n_max_kb``/``w_max_cycles`` switch on per-trial
    graph randomization.
    """

    graph: CallGraph
    graph_path: str | None = None
    mode: str = "single"
    subchannels: int = 1
    fading: FadingModel = FadingModel()
    radio: RadioConfig = RadioConfig()
    f_local_hz: float = 1e8
    f_server_hz: float = 1e10
    latency_budget_s: float | None = None
    n_max_kb: float | None = None
    w_max_cycles: float | None = None
    trials: int = DEFAULT_TRIALS
    seed: int = 0
    sweep: Sweep | None = None
    series: Series | None = None
    comment: str = ""

    def __post_init__(self):
        if self.mode not in ("single", "multi"):
            raise ScenarioError(f"mode must be 'single' or 'multi', got {self.mode!r}")
        if not _is_int(self.subchannels) or self.subchannels < 1:
            raise ScenarioError("subchannels must be an integer >= 1")
        if self.mode == "single" and self.subchannels != 1:
            raise ScenarioError("single-channel mode needs subchannels = 1")
        if not _is_int(self.trials) or self.trials < 1:
            raise ScenarioError("trials must be an integer >= 1")
        if not _is_int(self.seed) or not 0 <= self.seed < 2**64:
            raise ScenarioError("seed must be an integer in [0, 2**64)")
        if self.latency_budget_s is not None and not self.latency_budget_s > 0:
            raise ScenarioError("latency_budget_s must be positive or 'all_local'")
        for name in ("n_max_kb", "w_max_cycles"):
            value = getattr(self, name)
            if value is not None and not (value > 0 and math.isfinite(value)):
                raise ScenarioError(f"{name} must be positive")
        if self.sweep is not None:
            if self.sweep.axis not in AXES:
                raise ScenarioError(f"sweep axis must be one of {AXES}, got {self.sweep.axis!r}")
            _check_increasing(self.sweep.values, "sweep values")
            if self.sweep.axis == "n_max" and self.w_max_cycles is None:
                raise ScenarioError("an n_max sweep needs random_graph.w_max_cycles")
        if self.series is not None:
            if self.series.name not in SERIES:
                raise ScenarioError(f"series must be one of {SERIES}, got {self.series.name!r}")
            _check_increasing(self.series.values, "series values")
            if self.series.name == "branches" and not all(_is_int(m) for m in self.series.values):
                raise ScenarioError("branch counts must be integers")
        # ComputeConfig validates the speeds
        self.compute_for(self.graph)

    @property
    def random_graph(self) -> bool:
        return self.n_max_kb is not None or self.w_max_cycles is not None

    def compute_for(self, g: CallGraph) -> ComputeConfig:
        base = ComputeConfig(self.f_local_hz, self.f_server_hz)
        budget = self.latency_budget_s
        if budget is None:
            budget = all_local_time(g, base)
            if budget <= 0:
                raise ScenarioError("all-local latency budget is zero; set latency_budget_s")
        return replace(base, latency_budget_seconds=budget)

    def with_overrides(self, **changes) -> "Scenario":
        return replace(self, **{k: v for k, v in changes.items() if v is not None})


@dataclass(frozen=True)
class SweepRow:
    """Averages over the trials of one (series, axis) cell.

    Energies and the gap are means over the ``trials_used`` trials for which
    some partition (possibly all-local) was feasible; ``trials_excluded``
    counts the rest. ``offload_feasible_share`` is the share of used trials
    where at least one partition with a remote procedure was feasible.
    """

    series: str
    series_value: float | None
    axis: str
    axis_value: float | None
    mean_energy_j: float | None
    mean_feasible_fraction: float
    offload_feasible_share: float
    mean_bi_energy_j: float | None
    mean_relative_gap: float | None
    trials_used: int
    trials_excluded: int


@dataclass(frozen=True)
class TrialOutcome:
    energy_j: float
    feasible_fraction: float
    offload_feasible: bool
    bi_energy_j: float | None = None


# -- scenario files --------------------------------------------------------------

def _is_int(x) -> bool:
    return isinstance(x, (int, np.integer)) and not isinstance(x, bool)


def _check_increasing(values: Sequence, what: str) -> None:
    if len(values) == 0:
        raise ScenarioError(f"{what} must be nonempty")
    v = np.asarray(values, dtype=float)
    if np.any(v <= 0) or not np.all(np.isfinite(v)):
        raise ScenarioError(f"{what} must be positive")
    if np.any(np.diff(v) <= 0):
        raise ScenarioError(f"{what} must be strictly increasing")


def _keys(obj, allowed: set, where: str) -> dict:
    if not isinstance(obj, dict):
        raise ScenarioError(f"{where}: expected an object")
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise ScenarioError(f"{where}: unknown keys {unknown}")
    return obj


def _num(obj: dict, key: str, where: str):
    value = obj[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(f"{where}: {key!r} must be a number, got {value!r}")
    return value


def _values(obj, where: str) -> tuple:
    if not isinstance(obj, list):
        raise ScenarioError(f"{where}: 'values' must be an array")
    for v in obj:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ScenarioError(f"{where}: values must be numbers")
    return tuple(obj)


def scenario_from_dict(doc, base_dir: Path | str | None = None,
                       graph: CallGraph | None = None) -> Scenario:
    """Build a :class:`Scenario` from a parsed document.

    ``graph`` overrides the document's ``graph`` entry.
    """
    _keys(doc, _TOP_KEYS, "scenario")
    graph_path = None
    if graph is None:
        if "graph" not in doc or not isinstance(doc["graph"], str):
            raise ScenarioError("scenario: 'graph' must name a graph file")
        graph_path = Path(doc["graph"])
        if base_dir is not None and not graph_path.is_absolute():
            graph_path = Path(base_dir) / graph_path
        graph = load_call_graph(graph_path)
        graph_path = str(graph_path)

    kwargs = {"graph": graph, "graph_path": graph_path}
    for key in ("mode", "comment"):
        if key in doc:
            if not isinstance(doc[key], str):
                raise ScenarioError(f"scenario: {key!r} must be a string")
            kwargs[key] = doc[key]
    for key in ("subchannels", "trials", "seed"):
        if key in doc:
            if not _is_int(doc[key]):
                raise ScenarioError(f"scenario: {key!r} must be an integer")
            kwargs[key] = doc[key]

    if "fading" in doc:
        fd = _keys(doc["fading"], {"branches", "mean_gain"}, "fading")
        try:
            kwargs["fading"] = FadingModel(**fd)
        except (TypeError, ValueError) as exc:
            raise ScenarioError(f"fading: {exc}") from exc
    if "radio" in doc:
        rd = _keys(doc["radio"], _RADIO_KEYS, "radio")
        try:
            kwargs["radio"] = RadioConfig(**{k: _num(rd, k, "radio") for k in rd})
        except ValueError as exc:
            raise ScenarioError(f"radio: {exc}") from exc
    if "compute" in doc:
        cd = _keys(doc["compute"], _COMPUTE_KEYS, "compute")
        for key in ("f_local_hz", "f_server_hz"):
            if key in cd:
                kwargs[key] = float(_num(cd, key, "compute"))
        budget = cd.get("latency_budget_s", ALL_LOCAL_BUDGET)
        if budget != ALL_LOCAL_BUDGET:
            kwargs["latency_budget_s"] = float(_num(cd, "latency_budget_s", "compute"))
    if "random_graph" in doc:
        rg = _keys(doc["random_graph"], {"n_max_kb", "w_max_cycles"}, "random_graph")
        for key in rg:
            kwargs[key] = float(_num(rg, key, "random_graph"))
    if "sweep" in doc:
        sw = _keys(doc["sweep"], {"axis", "values"}, "sweep")
        if "axis" not in sw or "values" not in sw:
            raise ScenarioError("sweep: needs 'axis' and 'values'")
        kwargs["sweep"] = Sweep(sw["axis"], _values(sw["values"], "sweep"))
    if "series" in doc:
        se = _keys(doc["series"], {"name", "values"}, "series")
        if "name" not in se or "values" not in se:
            raise ScenarioError("series: needs 'name' and 'values'")
        kwargs["series"] = Series(se["name"], _values(se["values"], "series"))
    try:
        return Scenario(**kwargs)
    except ValueError as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(str(exc)) from exc


def shipped_path(name: str) -> Path:
    """Path of a file shipped in the package's ``scenarios`` folder.

    ``name`` may omit the ``.json`` suffix.
    """
    if not name.endswith(".json"):
        name += ".json"
    path = Path(str(files("jointoffload").joinpath("scenarios", name)))
    if not path.is_file():
        raise FileNotFoundError(f"no shipped file named {name!r}")
    return path


def load_scenario(path, graph: CallGraph | None = None) -> Scenario:
    """Read a scenario file; relative graph paths resolve against its folder."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return scenario_from_dict(doc, base_dir=path.parent, graph=graph)


# -- random streams and per-trial inputs --------------------------------------------

def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def draw_gains(s: Scenario, trial: int, radio: RadioConfig, fading: FadingModel) -> np.ndarray:
    """Normalized gains of trial ``trial``, one per subchannel.

    Subchannel ``k`` draws from its own stream, so the fading powers do not
    depend on the distance, the power budget or ``K``; with more branches
    the same stream is extended, which nests the draws.
    """
    alpha = np.array([sample_fading(fading, _stream(s.seed, trial, 1, k))
                      for k in range(s.subchannels)])
    return normalized_gain(alpha, radio)


def randomize_graph(g: CallGraph, n_max_kb: float | None, w_max_cycles: float | None,
                    rng: np.random.Generator) -> CallGraph:
    """Redraw state sizes in ``(0, n_max_kb]`` KB and cycles in ``(0, w_max_cycles]``.

    Uniform variates are drawn for every edge and vertex in file order
    whether or not the corresponding maximum is set, so the two draws do not
    perturb each other.
    """
    u_edge = 1.0 - rng.random(len(g.edges))
    u_vertex = 1.0 - rng.random(len(g.vertices))
    edges = g.edges
    if n_max_kb is not None:
        edges = tuple(replace(e, state_bits=float(n_max_kb * BITS_PER_KB * u))
                      for e, u in zip(g.edges, u_edge))
    vertices = g.vertices
    if w_max_cycles is not None:
        vertices = tuple(replace(v, cycles=float(w_max_cycles * u))
                         for v, u in zip(g.vertices, u_vertex))
    return g.replace(vertices=vertices, edges=edges)


def trial_graph(s: Scenario, trial: int, n_max_kb: float | None = None) -> CallGraph:
    if not s.random_graph:
        return s.graph
    n_max = s.n_max_kb if n_max_kb is None else n_max_kb
    return randomize_graph(s.graph, n_max, s.w_max_cycles, _stream(s.seed, trial, 0))


# -- cells ------------------------------------------------------------------------

_TABLES: dict = {}


def _cached_table(g: CallGraph, rc: RadioConfig, cc: ComputeConfig) -> PartitionTable:
    # tables only depend on T_b and P_e among the radio settings
    key = (g, rc.bit_duration_s, rc.packet_error_rate, cc)
    table = _TABLES.get(key)
    if table is None:
        if len(_TABLES) > 256:
            _TABLES.clear()
        table = _TABLES[key] = PartitionTable(g, rc, cc)
    return table


def _cell_settings(s: Scenario, series_value, axis_value):
    radio, fading, n_max = s.radio, s.fading, None
    if s.series is not None:
        if s.series.name == "branches":
            fading = replace(fading, branches=int(series_value))
        else:
            radio = replace(radio, power_budget_w=float(series_value))
    if s.sweep is not None:
        if s.sweep.axis == "distance":
            radio = replace(radio, distance_m=float(axis_value))
        elif s.sweep.axis == "p_t":
            radio = replace(radio, power_budget_w=float(axis_value))
        else:
            n_max = float(axis_value)
    return radio, fading, n_max


def run_trial(s: Scenario, trial: int, series_value=None, axis_value=None,
              solve: bool = True, bi: bool = False) -> TrialOutcome | None:
    """One Monte Carlo trial; ``None`` when not even all-local is feasible."""
    radio, fading, n_max = _cell_settings(s, series_value, axis_value)
    g = trial_graph(s, trial, n_max)
    cc = s.compute_for(g)
    table = _cached_table(g, radio, cc)
    gains = draw_gains(s, trial, radio, fading)
    ok = table.feasible(gains, s.mode, radio.power_budget_w)
    if not ok.any():
        return None
    fraction = float(np.count_nonzero(ok)) / table.size
    offload = bool(ok[1:].any())
    energy = math.nan
    bi_energy = None
    if solve:
        report = optimize(g, gains, radio, cc, s.mode, table=table)
        energy = report.energy_j
    if bi:
        bi_energy = bi_optimize(g, gains, radio, cc, s.mode).energy_j
    return TrialOutcome(energy, fraction, offload, bi_energy)


def _run_block(args) -> list:
    s, trials, series_value, axis_values, solve, bi = args
    return [[run_trial(s, j, series_value, x, solve, bi) for x in axis_values] for j in trials]


def _block_size(trials: int, workers: int) -> int:
    return max(1, math.ceil(trials / (4 * workers)))


def run_trials(s: Scenario, solve: bool = True, bi: bool = False,
               workers: int = 1) -> dict:
    """Outcomes keyed by ``(series_value, axis_value)``, lists in trial order.

    Work is split into blocks of consecutive trials; each block runs every
    axis value so one process reuses its partition tables. Blocks are
    reassembled in submission order, so the result does not depend on
    ``workers``.
    """
    series_values = s.series.values if s.series is not None else (None,)
    axis_values = s.sweep.values if s.sweep is not None else (None,)
    step = _block_size(s.trials, max(1, workers))
    blocks = [(s, range(start, min(start + step, s.trials)), sv, axis_values, solve, bi)
              for sv in series_values for start in range(0, s.trials, step)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_block, blocks))
    else:
        results = [_run_block(b) for b in blocks]
    out = {(sv, x): [] for sv in series_values for x in axis_values}
    for block, rows in zip(blocks, results):
        sv = block[2]
        for per_trial in rows:
            for x, outcome in zip(axis_values, per_trial):
                out[(sv, x)].append(outcome)
    return out


def _mean(values: list) -> float:
    return math.fsum(values) / len(values)


def _summarize(s: Scenario, outcomes: dict, solve: bool, bi: bool) -> list[SweepRow]:
    rows = []
    for (sv, x), cell in outcomes.items():
        used = [o for o in cell if o is not None]
        excluded = len(cell) - len(used)
        energy = bi_energy = gap = None
        fraction = share = math.nan
        if used:
            fraction = _mean([o.feasible_fraction for o in used])
            share = _mean([float(o.offload_feasible) for o in used])
            if solve:
                energy = _mean([o.energy_j for o in used])
            if bi:
                bi_energy = _mean([o.bi_energy_j for o in used])
                gap = (bi_energy - energy) / energy if energy > 0 else 0.0
        rows.append(SweepRow(
            series=s.series.name if s.series is not None else "",
            series_value=sv,
            axis=s.sweep.axis if s.sweep is not None else "",
            axis_value=x,
            mean_energy_j=energy,
            mean_feasible_fraction=fraction,
            offload_feasible_share=share,
            mean_bi_energy_j=bi_energy,
            mean_relative_gap=gap,
            trials_used=len(used),
            trials_excluded=excluded,
        ))
    return rows


def _require_axis(s: Scenario, axis: str) -> None:
    if s.sweep is None or s.sweep.axis != axis:
        found = None if s.sweep is None else s.sweep.axis
        raise ScenarioError(f"this sweep runs over '{axis}', the scenario sweeps {found!r}")


def run_distance_sweep(s: Scenario, workers: int = 1) -> list[SweepRow]:
    """Mean optimal energy and feasible fraction per distance."""
    _require_axis(s, "distance")
    return _summarize(s, run_trials(s, workers=workers), True, False)


def run_nmax_sweep(s: Scenario, workers: int = 1) -> list[SweepRow]:
    """Mean optimal energy and feasible fraction per maximum state size (KB)."""
    _require_axis(s, "n_max")
    return _summarize(s, run_trials(s, workers=workers), True, False)


def run_bi_comparison(s: Scenario, workers: int = 1) -> list[SweepRow]:
    """Exhaustive and backward-induction energies per distance.

    ``mean_relative_gap`` is ``(mean BI energy - mean optimal energy) /
    mean optimal energy`` over the cell's used trials.
    """
    _require_axis(s, "distance")
    return _summarize(s, run_trials(s, bi=True, workers=workers), True, True)


def run_feasible_fraction(s: Scenario, workers: int = 1) -> list[SweepRow]:
    """Feasible fraction only (no power allocation is solved), any axis."""
    return _summarize(s, run_trials(s, solve=False, workers=workers), False, False)


# -- output -----------------------------------------------------------------------

CSV_COLUMNS = [f.name for f in fields(SweepRow)]


def format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if _is_int(value):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def _csv_text(rows: Iterable[SweepRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow([format_value(getattr(row, c)) for c in CSV_COLUMNS])
    return buf.getvalue()


def emit_csv(rows: Sequence[SweepRow], destination) -> None:
    """Write ``rows`` as UTF-8 CSV, floats with 17 significant digits.

    ``destination`` is a path or a text stream. Empty cells mark values that
    were not computed.
    """
    if not rows:
        raise ValueError("no rows to write")
    text = _csv_text(rows)
    if isinstance(destination, (str, os.PathLike)):
        with open(destination, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        destination.write(text)


def format_rows(rows: Sequence[SweepRow]) -> str:
    """Fixed-width table for terminals (rounded; use CSV for exact values)."""
    cols = [c for c in CSV_COLUMNS if any(getattr(r, c) not in (None, "") for r in rows)]
    cells = [[c for c in cols]]
    for r in rows:
        line = []
        for c in cols:
            v = getattr(r, c)
            if isinstance(v, float):
                line.append(f"{v:.6g}")
            else:
                line.append("" if v is None else str(v))
        cells.append(line)
    widths = [max(len(row[i]) for row in cells) for i in range(len(cols))]
    return "\n".join("  ".join(x.rjust(w) for x, w in zip(row, widths)) for row in cells) + "\n"
