"""Device connectivity and random placement of qubit sections."""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np

# 16-qubit heavy-hex device couplings, without the (1, 4) link.
GUADALUPE_EDGES: tuple[tuple[int, int], ...] = (
    (0, 1), (1, 2), (2, 3), (3, 5), (4, 7), (5, 8), (6, 7), (7, 10),
    (8, 9), (8, 11), (10, 12), (11, 14), (12, 13), (12, 15), (13, 14),
)


def _norm_edge(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a < b else (b, a)


@dataclass(frozen=True)
class ChipGraph:
    num_qubits: int
    edges: frozenset[tuple[int, int]]

    def __post_init__(self):
        if self.num_qubits < 1:
            raise ValueError("num_qubits must be positive")
        for a, b in self.edges:
            if not (0 <= a < b < self.num_qubits):
                raise ValueError(f"invalid edge {(a, b)} for {self.num_qubits} qubits")
        if not _connected(set(range(self.num_qubits)), self.edges):
            raise ValueError("chip graph must be connected")

    @classmethod
    def from_edges(cls, num_qubits: int, edges) -> ChipGraph:
        normed = set()
        for a, b in edges:
            a, b = int(a), int(b)
            if a == b:
                raise ValueError(f"self-loop on qubit {a}")
            normed.add(_norm_edge(a, b))
        return cls(num_qubits, frozenset(normed))

    def contains_edge(self, a: int, b: int) -> bool:
        return _norm_edge(a, b) in self.edges

    def neighbors(self, qubit: int) -> list[int]:
        out = [b for a, b in self.edges if a == qubit] + [a for a, b in self.edges if b == qubit]
        return sorted(out)

    def degree(self, qubit: int) -> int:
        return len(self.neighbors(qubit))

    def sorted_edges(self) -> list[tuple[int, int]]:
        return sorted(self.edges)

    def to_json(self) -> dict:
        return {"num_qubits": self.num_qubits, "edges": [list(e) for e in self.sorted_edges()]}


@dataclass(frozen=True)
class QubitSection:
    """A connected set of physical qubits hosting one circuit realization."""

    q: tuple[int, ...]
    induced_edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if len(self.q) < 2:
            raise ValueError("a section needs at least two qubits")
        if any(a >= b for a, b in zip(self.q, self.q[1:])):
            raise ValueError("section indices must be strictly ascending")
        if not _connected(set(self.q), self.induced_edges):
            raise ValueError(f"section {self.q} is not connected")

    @property
    def n(self) -> int:
        return len(self.q)


def _connected(nodes: set[int], edges) -> bool:
    if not nodes:
        return False
    adj: dict[int, list[int]] = {v: [] for v in nodes}
    for a, b in edges:
        if a in adj and b in adj:
            adj[a].append(b)
            adj[b].append(a)
    start = min(nodes)
    seen = {start}
    todo = deque([start])
    while todo:
        v = todo.popleft()
        for w in adj[v]:
            if w not in seen:
                seen.add(w)
                todo.append(w)
    return seen == nodes


def build_chip_graph() -> ChipGraph:
    return ChipGraph.from_edges(16, GUADALUPE_EDGES)


def load_chip_graph(path: str | Path) -> ChipGraph:
    """Read a topology override: ``{"num_qubits": n, "edges": [[a, b], ...]}``."""
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    return ChipGraph.from_edges(int(data["num_qubits"]), data["edges"])


def section_from_qubits(graph: ChipGraph, qubits) -> QubitSection:
    q = tuple(sorted(int(x) for x in qubits))
    if len(set(q)) != len(q):
        raise ValueError(f"duplicate qubits in {qubits}")
    members = set(q)
    induced = tuple(e for e in graph.sorted_edges() if e[0] in members and e[1] in members)
    return QubitSection(q, induced)


def sample_section(graph: ChipGraph, n: int, rng: np.random.Generator) -> QubitSection:
    """Grow a random connected section of ``n`` qubits.

    Starts from a uniformly chosen qubit and repeatedly adds a uniformly chosen
    neighbor of the current set.
    """
    if not 2 <= n <= graph.num_qubits:
        raise ValueError(f"section size must be in [2, {graph.num_qubits}], got {n}")
    chosen = {int(rng.integers(graph.num_qubits))}
    while len(chosen) < n:
        frontier = sorted({w for v in chosen for w in graph.neighbors(v)} - chosen)
        chosen.add(frontier[int(rng.integers(len(frontier)))])
    return section_from_qubits(graph, chosen)
