from __future__ import annotations

import numpy as np
import pytest

from jointoffload.experiments import shipped_path
from jointoffload.graph import CallGraph, Edge, Vertex, load_call_graph

ACCEPTANCE_LINES: list[str] = []


def record_acceptance(line: str) -> None:
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def chain(n: int, energies=None, cycles=None, kb=100.0, eps=0.0, gamma=0.0,
          root_local: bool = True) -> CallGraph:
    """Chain ``1 -> 2 -> ... -> n``."""
    energies = energies or [1.0] * n
    cycles = cycles or [1e7] * n
    vertices = [Vertex(str(i + 1), energies[i], cycles[i], not (root_local and i == 0))
                for i in range(n)]
    edges = [Edge(str(i), str(i + 1), kb * 8192, eps, gamma) for i in range(1, n)]
    return CallGraph(tuple(vertices), tuple(edges))


def random_instances(count, seed):
    """Random trees with mixed energies, so optima range from all-local to full offload."""
    rng = np.random.default_rng(seed)
    for _ in range(count):
        n = int(rng.integers(3, 9))
        vertices = tuple(Vertex(str(i), float(rng.uniform(0, 0.5)), float(rng.uniform(0, 1e8)), i > 0)
                         for i in range(n))
        edges = tuple(Edge(str(int(rng.integers(0, i))), str(i), float(rng.uniform(1, 2000)) * 8192,
                           float(rng.uniform(0, 0.05)), float(rng.uniform(0, 0.05)))
                      for i in range(1, n))
        yield CallGraph(vertices, edges), rng


@pytest.fixture(scope="session")
def graph1() -> CallGraph:
    return load_call_graph(shipped_path("graph1"))


@pytest.fixture(scope="session")
def graph3() -> CallGraph:
    return load_call_graph(shipped_path("graph3"))


@pytest.fixture(scope="session")
def face_graph() -> CallGraph:
    return load_call_graph(shipped_path("face_recognition"))
