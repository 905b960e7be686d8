"""Gate and readout error model with tunable CNOT noise strength.

A channel is stored as a weighted mixture of branches. Each branch is itself a
CPTP map given by its Kraus operators, so the channel acts as

    rho -> sum_b w_b sum_k K_bk rho K_bk^dagger.

A Pauli error term is a branch with a single unitary operator; general
(non-unitary) maps are branches with several operators. Keeping the mixture
explicit makes the CNOT strength knob exact: scaling by ``p`` prepends an
identity branch of weight ``1 - p`` and multiplies the other weights by ``p``.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field, replace
from functools import cached_property, reduce
from pathlib import Path

import numpy as np

from .chip import ChipGraph

CPTP_TOL = 1e-10

PAULIS = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

DEFAULT_P2 = 1e-2
DEFAULT_P1 = 3e-4
DEFAULT_READOUT = 2e-2
DEFAULT_PAULI_TERMS = {(12, 15): (("XZ", 2.7e-4),)}


def pauli_string(ops: str) -> np.ndarray:
    """Tensor product of Pauli letters; the first letter is the most significant qubit."""
    return reduce(np.kron, (PAULIS[c] for c in ops.upper()))


@dataclass(frozen=True, eq=False)
class Branch:
    weight: float
    ops: tuple[np.ndarray, ...]
    label: str = ""


@dataclass(frozen=True, eq=False)
class KrausChannel:
    n_qubits: int
    branches: tuple[Branch, ...]

    def kraus_ops(self) -> list[np.ndarray]:
        """Flattened Kraus operators ``sqrt(w_b) K_bk``."""
        return [np.sqrt(b.weight) * k for b in self.branches for k in b.ops]

    def apply(self, rho: np.ndarray) -> np.ndarray:
        return sum(k @ rho @ k.conj().T for k in self.kraus_ops())

    def pauli_prob(self, ops: str) -> float:
        """Total weight of branches that are exactly the given Pauli string."""
        return sum(b.weight for b in self.branches if b.label == ops.upper())

    @cached_property
    def sampling(self) -> ChannelSampler:
        return ChannelSampler.from_channel(self)


@dataclass(frozen=True, eq=False)
class ChannelSampler:
    """Precomputed data for drawing trajectory branches.

    ``kinds[b]`` is 0 for an identity branch, 1 for a single unitary, 2 for a
    state-dependent set of Kraus operators.
    """

    cumulative: np.ndarray
    kinds: tuple[int, ...]
    unitaries: tuple[np.ndarray | None, ...]
    ops: tuple[tuple[np.ndarray, ...], ...]
    factors: tuple[tuple[tuple[int, np.ndarray], ...] | None, ...]

    @property
    def state_independent(self) -> bool:
        return 2 not in self.kinds

    @classmethod
    def from_channel(cls, channel: KrausChannel) -> ChannelSampler:
        d = 2 ** channel.n_qubits
        weights = np.array([b.weight for b in channel.branches], dtype=float)
        kinds, unitaries, factors = [], [], []
        for b in channel.branches:
            factors.append(_pauli_factors(b.label, channel.n_qubits))
            kind, u = 2, None
            if len(b.ops) == 1:
                k = b.ops[0]
                gram = k.conj().T @ k
                if np.allclose(gram, gram[0, 0] * np.eye(d), atol=1e-12) and gram[0, 0].real > 0:
                    u = k / np.sqrt(gram[0, 0].real)
                    kind = 0 if np.allclose(u, u[0, 0] * np.eye(d), atol=1e-12) else 1
            kinds.append(kind)
            unitaries.append(u)
        cumulative = np.cumsum(weights)
        cumulative /= cumulative[-1]
        return cls(cumulative, tuple(kinds), tuple(unitaries),
                   tuple(b.ops for b in channel.branches), tuple(factors))

    def draw(self, u: np.ndarray) -> np.ndarray:
        """Map uniforms in [0, 1) to branch indices."""
        idx = np.searchsorted(self.cumulative, u, side="right")
        return np.minimum(idx, len(self.kinds) - 1)


def _pauli_factors(label: str, n_qubits: int):
    """Non-identity single-qubit factors ``(qubit, matrix)`` of a Pauli label."""
    if len(label) != n_qubits or any(c not in PAULIS for c in label):
        return None
    return tuple((i, PAULIS[c]) for i, c in enumerate(label) if c != "I")


def validate_cptp(channel: KrausChannel, tol: float = CPTP_TOL) -> bool:
    if any(b.weight < 0 for b in channel.branches):
        return False
    d = 2 ** channel.n_qubits
    total = np.zeros((d, d), dtype=complex)
    for k in channel.kraus_ops():
        if k.shape != (d, d):
            return False
        total += k.conj().T @ k
    return bool(np.max(np.abs(total - np.eye(d))) <= tol)


def _checked(channel: KrausChannel) -> KrausChannel:
    if not validate_cptp(channel):
        raise ValueError("channel is not completely positive and trace preserving")
    return channel


def identity_channel(n_qubits: int = 1) -> KrausChannel:
    return KrausChannel(n_qubits, (Branch(1.0, (np.eye(2 ** n_qubits, dtype=complex),), "I" * n_qubits),))


def kraus_channel(ops, n_qubits: int | None = None) -> KrausChannel:
    ops = tuple(np.asarray(k, dtype=complex) for k in ops)
    if n_qubits is None:
        n_qubits = int(round(np.log2(ops[0].shape[0])))
    return _checked(KrausChannel(n_qubits, (Branch(1.0, ops, "kraus"),)))


def pauli_channel(terms, n_qubits: int, kraus=None) -> KrausChannel:
    """Mixture of Pauli errors ``[(ops, prob), ...]``; identity takes the rest.

    If ``kraus`` operators are given, every branch is followed by that map.
    """
    terms = [(ops.upper(), float(p)) for ops, p in terms]
    for ops, p in terms:
        if len(ops) != n_qubits or p < 0:
            raise ValueError(f"bad Pauli term {(ops, p)} for {n_qubits} qubits")
    rest = 1.0 - sum(p for _, p in terms)
    if rest < -1e-15:
        raise ValueError("Pauli term probabilities exceed 1")
    branches = [Branch(max(rest, 0.0), (pauli_string("I" * n_qubits),), "I" * n_qubits)]
    branches += [Branch(p, (pauli_string(ops),), ops) for ops, p in terms if p > 0]
    channel = KrausChannel(n_qubits, tuple(b for b in branches if b.weight > 0))
    if kraus is not None:
        channel = compose(channel, kraus_channel(kraus, n_qubits))
    return _checked(channel)


def depolarizing(p: float, n_qubits: int = 1) -> KrausChannel:
    """rho -> (1 - p) rho + p I/d, as a uniform mixture over Pauli strings."""
    if not 0.0 <= p <= 1.0 + 1e-15:
        raise ValueError(f"depolarizing probability must be in [0, 1], got {p}")
    d2 = 4 ** n_qubits
    terms = ["".join(t) for t in itertools.product("IXYZ", repeat=n_qubits)][1:]
    return pauli_channel([(t, p / d2) for t in terms], n_qubits)


def compose(first: KrausChannel, second: KrausChannel) -> KrausChannel:
    """The channel that applies ``first`` then ``second``, branch by branch."""
    if first.n_qubits != second.n_qubits:
        raise ValueError("cannot compose channels on different qubit counts")
    branches = []
    for b1 in first.branches:
        for b2 in second.branches:
            ops = tuple(k2 @ k1 for k1 in b1.ops for k2 in b2.ops)
            label = b1.label if b2.label == "I" * second.n_qubits else ""
            branches.append(Branch(b1.weight * b2.weight, ops, label))
    return KrausChannel(first.n_qubits, tuple(branches))


def mix_with_identity(channel: KrausChannel, p: float) -> KrausChannel:
    """(1 - p) rho + p E(rho), realised with an explicit identity branch."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p_noise must be in [0, 1], got {p}")
    if p == 1.0:
        return channel
    ident = identity_channel(channel.n_qubits).branches[0]
    branches = [Branch(1.0 - p, ident.ops, ident.label)]
    if p > 0:
        branches += [Branch(p * b.weight, b.ops, b.label) for b in channel.branches]
    return KrausChannel(channel.n_qubits, tuple(branches))


@dataclass(frozen=True, eq=False)
class NoiseModel:
    """Per-gate error channels plus readout flips.

    CNOT channels are keyed by the sorted qubit pair; their matrices act with
    the lower physical index as the more significant qubit. Readout entries are
    ``(p01, p10)``: probability of reading 1 when the qubit is 0, and vice versa.
    """

    cnot_channels: dict[tuple[int, int], KrausChannel] = field(default_factory=dict)
    single_qubit_channels: dict[tuple[str, int], KrausChannel] = field(default_factory=dict)
    readout: dict[int, tuple[float, float]] = field(default_factory=dict)
    p_noise: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.p_noise <= 1.0:
            raise ValueError(f"p_noise must be in [0, 1], got {self.p_noise}")
        for ch in list(self.cnot_channels.values()) + list(self.single_qubit_channels.values()):
            _checked(ch)
        for q, (p01, p10) in self.readout.items():
            if not (0 <= p01 <= 1 and 0 <= p10 <= 1):
                raise ValueError(f"readout probabilities out of range on qubit {q}")

    def cnot_channel(self, a: int, b: int) -> KrausChannel | None:
        return self.cnot_channels.get((min(a, b), max(a, b)))

    def gate_channel(self, kind: str, qubit: int) -> KrausChannel | None:
        return self.single_qubit_channels.get((kind, qubit))

    def readout_for(self, qubit: int) -> tuple[float, float]:
        return self.readout.get(qubit, (0.0, 0.0))

    def channels(self) -> list[KrausChannel]:
        return list(self.cnot_channels.values()) + list(self.single_qubit_channels.values())


def ideal_model() -> NoiseModel:
    return NoiseModel()


def default_model(graph: ChipGraph, p2: float = DEFAULT_P2, p1: float = DEFAULT_P1,
                  readout: float = DEFAULT_READOUT, pauli_terms=None) -> NoiseModel:
    """Uniform depolarizing gate noise with a few per-edge Pauli terms.

    CNOT channel: two-qubit depolarizing ``p2`` mixed with the edge's extra
    Pauli terms. RX and RZ: single-qubit depolarizing ``p1``. Readout: symmetric
    flips with probability ``readout``.
    """
    if pauli_terms is None:
        pauli_terms = DEFAULT_PAULI_TERMS
    cnot = {}
    for edge in graph.sorted_edges():
        cnot[edge] = _edge_channel(p2, pauli_terms.get(edge, ()), None)
    single = {}
    for q in range(graph.num_qubits):
        ch = depolarizing(p1, 1)
        single[("RX", q)] = ch
        single[("RZ", q)] = ch
    ro = {q: (readout, readout) for q in range(graph.num_qubits)}
    return NoiseModel(cnot, single, ro)


def _edge_channel(p2: float, terms, kraus) -> KrausChannel:
    d2 = 16
    pauli = ["".join(t) for t in itertools.product("IXYZ", repeat=2)][1:]
    all_terms = [(t, p2 / d2) for t in pauli] + [(ops, p) for ops, p in terms]
    return pauli_channel(all_terms, 2, kraus=kraus)


def scale_cnot_noise(model: NoiseModel, p_noise: float) -> NoiseModel:
    """Mix every CNOT channel with the identity: E' = (1 - p) id + p E."""
    if not 0.0 <= p_noise <= 1.0:
        raise ValueError(f"p_noise must be in [0, 1], got {p_noise}")
    cnot = {e: mix_with_identity(ch, p_noise) for e, ch in model.cnot_channels.items()}
    return replace(model, cnot_channels=cnot, p_noise=model.p_noise * p_noise)


# --- config files -----------------------------------------------------------

def _decode_matrix(rows) -> np.ndarray:
    return np.array([[complex(re, im) for re, im in row] for row in rows], dtype=complex)


def _swap_pair(ops: str | None, kraus):
    swap = np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex)
    new_ops = ops[::-1] if ops is not None else None
    new_kraus = [swap @ k @ swap for k in kraus] if kraus is not None else None
    return new_ops, new_kraus


def default_config() -> dict:
    return {
        "p_noise": 1.0,
        "two_qubit": {
            "default_depolarizing": DEFAULT_P2,
            "edges": [
                {"pair": list(e), "pauli_terms": [{"ops": o, "prob": p} for o, p in terms]}
                for e, terms in sorted(DEFAULT_PAULI_TERMS.items())
            ],
        },
        "single_qubit": {"depolarizing": DEFAULT_P1},
        "readout": {"p01": DEFAULT_READOUT, "p10": DEFAULT_READOUT},
    }


def model_from_config(config: dict, graph: ChipGraph) -> NoiseModel:
    """Build a model from the JSON config layout; missing sections use defaults.

    Kraus matrices are nested ``[re, im]`` pairs. An edge entry's ``kraus``
    list is a map applied after the edge's Pauli mixture; a Pauli term may
    carry its own ``kraus`` list applied after that Pauli.
    """
    defaults = default_config()
    two = {**defaults["two_qubit"], **config.get("two_qubit", {})}
    single = {**defaults["single_qubit"], **config.get("single_qubit", {})}
    readout = {**defaults["readout"], **config.get("readout", {})}
    p2 = float(two["default_depolarizing"])

    edge_specs = {}
    for entry in two.get("edges", []):
        a, b = (int(x) for x in entry["pair"])
        if not graph.contains_edge(a, b):
            raise ValueError(f"noise config names ({a}, {b}), which is not a chip edge")
        edge_specs[(min(a, b), max(a, b))] = (entry, a > b)

    cnot = {}
    for edge in graph.sorted_edges():
        if edge not in edge_specs:
            cnot[edge] = _edge_channel(p2, (), None)
            continue
        entry, flipped = edge_specs[edge]
        dep = depolarizing(float(entry.get("depolarizing", p2)), 2)
        branches = list(dep.branches)
        for term in entry.get("pauli_terms", []):
            ops = term["ops"].upper()
            kraus = [_decode_matrix(k) for k in term["kraus"]] if "kraus" in term else None
            if flipped:
                ops, kraus = _swap_pair(ops, kraus)
            t = pauli_channel([(ops, 1.0)], 2)
            if kraus is not None:
                t = compose(t, kraus_channel(kraus, 2))
            branches += [Branch(float(term["prob"]) * b.weight, b.ops, b.label) for b in t.branches]
        extra = sum(float(t["prob"]) for t in entry.get("pauli_terms", []))
        branches[0] = Branch(branches[0].weight - extra, branches[0].ops, branches[0].label)
        if branches[0].weight < -1e-15:
            raise ValueError(f"error probabilities on edge {edge} exceed 1")
        channel = KrausChannel(2, tuple(b for b in branches if b.weight > 0))
        if "kraus" in entry:
            kraus = [_decode_matrix(k) for k in entry["kraus"]]
            if flipped:
                _, kraus = _swap_pair(None, kraus)
            channel = compose(channel, kraus_channel(kraus, 2))
        cnot[edge] = _checked(channel)

    p1 = float(single["depolarizing"])
    sq = {}
    for q in range(graph.num_qubits):
        ch = depolarizing(p1, 1)
        sq[("RX", q)] = ch
        sq[("RZ", q)] = ch

    ro = {q: (float(readout["p01"]), float(readout["p10"])) for q in range(graph.num_qubits)}
    for q, pair in readout.get("per_qubit", {}).items():
        ro[int(q)] = (float(pair[0]), float(pair[1]))

    model = NoiseModel(cnot, sq, ro)
    return scale_cnot_noise(model, float(config.get("p_noise", 1.0)))


def load_noise_config(path: str | Path, graph: ChipGraph) -> NoiseModel:
    with open(path, encoding="utf-8") as fh:
        return model_from_config(json.load(fh), graph)
