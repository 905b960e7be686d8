"""Trotterized Ising circuits (configurations A and B) and their transpilation."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from math import cos, pi, sin

import numpy as np

from .chip import ChipGraph, QubitSection, section_from_qubits

DEFAULT_PHI = -pi / 2
THETA_MAX = pi / 2
CONFIGS = ("A", "B")
GATE_KINDS = ("RX", "RZ", "RZZ", "CNOT")


def rx_matrix(theta: float) -> np.ndarray:
    c, s = cos(theta / 2), sin(theta / 2)
    return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)


def rz_matrix(phi: float) -> np.ndarray:
    return np.diag([np.exp(-0.5j * phi), np.exp(0.5j * phi)])


def rzz_matrix(phi: float) -> np.ndarray:
    a, b = np.exp(-0.5j * phi), np.exp(0.5j * phi)
    return np.diag([a, b, b, a])


def cnot_matrix() -> np.ndarray:
    """CNOT with the first (more significant) qubit as control."""
    return np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)


@dataclass(frozen=True)
class Gate:
    kind: str
    qubits: tuple[int, ...]
    angle: float | None = None

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        arity = 1 if self.kind in ("RX", "RZ") else 2
        if len(self.qubits) != arity:
            raise ValueError(f"{self.kind} acts on {arity} qubit(s), got {self.qubits}")
        if arity == 2 and self.qubits[0] == self.qubits[1]:
            raise ValueError(f"{self.kind} needs two distinct qubits")
        if (self.kind == "CNOT") != (self.angle is None):
            raise ValueError(f"{self.kind} angle mismatch: {self.angle}")

    def matrix(self) -> np.ndarray:
        if self.kind == "RX":
            return rx_matrix(self.angle)
        if self.kind == "RZ":
            return rz_matrix(self.angle)
        if self.kind == "RZZ":
            return rzz_matrix(self.angle)
        return cnot_matrix()

    def inverse(self) -> Gate:
        if self.kind == "CNOT":
            return self
        return Gate(self.kind, self.qubits, -self.angle)


@dataclass(frozen=True)
class TrotterSpec:
    J: float
    h: float
    delta_t: float
    T: float

    @property
    def p_layers(self) -> int:
        steps = self.T / self.delta_t
        p = round(steps)
        if p < 1 or abs(steps - p) > 1e-9:
            raise ValueError(f"T/delta_t = {steps} is not a positive integer")
        return p


def trotter_angles(spec: TrotterSpec) -> tuple[float, float]:
    """Return ``(phi, theta)`` for one first-order Trotter step."""
    if spec.delta_t <= 0:
        raise ValueError("delta_t must be positive")
    return -2.0 * spec.J * spec.delta_t, 2.0 * spec.h * spec.delta_t


@dataclass(frozen=True)
class Circuit:
    section: QubitSection
    p_layers: int
    config: str
    theta: tuple[float, ...]
    phi: float = DEFAULT_PHI
    gates: tuple[Gate, ...] = field(default=(), repr=False)
    transpiled: bool = False
    folded: bool = False
    seed: int | None = None

    @property
    def q(self) -> tuple[int, ...]:
        return self.section.q

    @property
    def n(self) -> int:
        return self.section.n

    def to_json(self) -> dict:
        return {
            "config": self.config,
            "q": list(self.q),
            "p_layers": self.p_layers,
            "theta": list(self.theta),
            "phi": self.phi,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, data: dict, graph: ChipGraph) -> Circuit:
        section = section_from_qubits(graph, data["q"])
        return logical_circuit(
            section, int(data["p_layers"]), data["config"], data["theta"],
            phi=float(data.get("phi", DEFAULT_PHI)), seed=data.get("seed"),
        )


def logical_circuit(section: QubitSection, p_layers: int, config: str, theta,
                    phi: float = DEFAULT_PHI, seed: int | None = None) -> Circuit:
    """Assemble the layered RX/RZZ gate list for given angles."""
    if p_layers < 1:
        raise ValueError("p_layers must be >= 1")
    if config not in CONFIGS:
        raise ValueError(f"config must be 'A' or 'B', got {config!r}")
    theta = tuple(float(t) for t in theta)
    expected = section.n if config == "A" else p_layers
    if len(theta) != expected:
        raise ValueError(f"config {config} needs {expected} angles, got {len(theta)}")
    edges = sorted(section.induced_edges)
    gates = []
    for p in range(p_layers):
        for i, qubit in enumerate(section.q):
            gates.append(Gate("RX", (qubit,), theta[i] if config == "A" else theta[p]))
        for a, b in edges:
            gates.append(Gate("RZZ", (a, b), phi))
    return Circuit(section, p_layers, config, theta, phi, tuple(gates), seed=seed)


def build_circuit(section: QubitSection, p_layers: int, config: str,
                  rng: np.random.Generator, phi: float = DEFAULT_PHI) -> Circuit:
    """Draw angles uniformly in [0, pi/2] and build the logical circuit."""
    count = section.n if config == "A" else p_layers
    theta = rng.uniform(0.0, THETA_MAX, size=count)
    return logical_circuit(section, p_layers, config, theta, phi=phi)


def transpile(circuit: Circuit) -> Circuit:
    """Rewrite each RZZ(phi) on (i, j), i < j, as CNOT(i->j) RZ_j(phi) CNOT(i->j)."""
    if circuit.transpiled:
        raise ValueError("circuit is already transpiled")
    out = []
    for g in circuit.gates:
        if g.kind == "RZZ":
            a, b = sorted(g.qubits)
            out += [Gate("CNOT", (a, b)), Gate("RZ", (b,), g.angle), Gate("CNOT", (a, b))]
        else:
            out.append(g)
    return replace(circuit, gates=tuple(out), transpiled=True)
