from math import pi, sqrt

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import circuit_unitary
from qsynergy.chip import build_chip_graph, sample_section, section_from_qubits
from qsynergy.circuits import (
    DEFAULT_PHI, Circuit, Gate, TrotterSpec, build_circuit, logical_circuit, rx_matrix, rz_matrix,
    rzz_matrix, transpile, trotter_angles,
)
from qsynergy.simulator import final_state, run_exact

ANGLES = [0.0, pi / 2, -pi / 2, pi]


@pytest.mark.parametrize("t", ANGLES)
def test_rx_entries(t):
    c, s = np.cos(t / 2), np.sin(t / 2)
    want = np.array([[c, -1j * s], [-1j * s, c]])
    assert np.max(np.abs(rx_matrix(t) - want)) < 1e-12


@pytest.mark.parametrize("p", ANGLES)
def test_rzz_entries(p):
    a = np.exp(-0.5j * p)
    want = np.diag([a, np.conj(a), np.conj(a), a])
    assert np.max(np.abs(rzz_matrix(p) - want)) < 1e-12


def test_named_values():
    assert np.allclose(rx_matrix(0.0), np.eye(2), atol=1e-12)
    assert np.allclose(rx_matrix(pi), [[0, -1j], [-1j, 0]], atol=1e-12)
    assert np.allclose(rx_matrix(pi / 2), np.array([[1, -1j], [-1j, 1]]) / sqrt(2), atol=1e-12)
    assert np.allclose(rzz_matrix(0.0), np.eye(4), atol=1e-12)
    w = np.exp(1j * pi / 4)
    assert np.allclose(rzz_matrix(-pi / 2), np.diag([w, w.conjugate(), w.conjugate(), w]), atol=1e-12)
    assert np.allclose(rzz_matrix(2 * pi), -np.eye(4), atol=1e-12)


def test_unitarity_random_angles():
    rng = np.random.default_rng(3)
    for t in rng.uniform(-10, 10, size=100):
        for m in (rx_matrix(t), rz_matrix(t), rzz_matrix(t)):
            assert np.max(np.abs(m.conj().T @ m - np.eye(len(m)))) < 1e-12


def test_trotter_angles():
    assert trotter_angles(TrotterSpec(pi / 4, 0.7, 1.0, 3.0))[0] == pytest.approx(-pi / 2)
    assert trotter_angles(TrotterSpec(0, 0, 1, 1)) == (0, 0)
    phi, theta = trotter_angles(TrotterSpec(1, 0.3, 0.1, 1.0))
    assert phi == pytest.approx(-0.2) and theta == pytest.approx(0.06)
    assert TrotterSpec(1, 0.3, 0.1, 1.0).p_layers == 10
    with pytest.raises(ValueError):
        TrotterSpec(1, 1, 0.3, 1.0).p_layers


def test_gate_validation():
    with pytest.raises(ValueError):
        Gate("RX", (0, 1), 0.1)
    with pytest.raises(ValueError):
        Gate("CNOT", (2, 2))
    with pytest.raises(ValueError):
        Gate("CNOT", (0, 1), 0.5)
    with pytest.raises(ValueError):
        Gate("H", (0,), None)


def test_config_a_layout(graph):
    s = section_from_qubits(graph, [12, 13, 14, 15])
    c = build_circuit(s, 1, "A", np.random.default_rng(0))
    assert [g.kind for g in c.gates] == ["RX"] * 4 + ["RZZ"] * 3
    assert len(set(c.theta)) == 4
    assert [g.qubits for g in c.gates[4:]] == [(12, 13), (12, 15), (13, 14)]
    assert all(g.angle == DEFAULT_PHI for g in c.gates[4:])


def test_config_a_reuses_angles_across_layers(graph):
    s = section_from_qubits(graph, [0, 1])
    c = build_circuit(s, 2, "A", np.random.default_rng(9))
    assert [g.kind for g in c.gates] == ["RX", "RX", "RZZ", "RX", "RX", "RZZ"]
    assert [g.angle for g in c.gates[:2]] == [g.angle for g in c.gates[3:5]]


def test_config_b_angles_per_layer(graph):
    s = sample_section(graph, 5, np.random.default_rng(1))
    c = build_circuit(s, 20, "B", np.random.default_rng(2))
    assert len(c.theta) == 20 and len(set(c.theta)) == 20
    per_layer = len(s.q) + len(s.induced_edges)
    for p in range(20):
        layer = c.gates[p * per_layer:(p + 1) * per_layer]
        assert {g.angle for g in layer if g.kind == "RX"} == {c.theta[p]}


def test_angles_in_range_and_gate_count(graph):
    rng = np.random.default_rng(8)
    for _ in range(20):
        s = sample_section(graph, int(rng.integers(2, 9)), rng)
        p = int(rng.integers(1, 6))
        c = build_circuit(s, p, "AB"[int(rng.integers(2))], rng)
        assert all(0 <= t <= pi / 2 for t in c.theta)
        assert len(c.gates) == p * (s.n + len(s.induced_edges))


def test_theta_length_enforced(graph):
    s = section_from_qubits(graph, [0, 1, 2])
    with pytest.raises(ValueError):
        logical_circuit(s, 2, "A", [0.1, 0.2])
    with pytest.raises(ValueError):
        logical_circuit(s, 2, "B", [0.1, 0.2, 0.3])
    with pytest.raises(ValueError):
        logical_circuit(s, 0, "B", [])


def test_transpile_substitution(graph):
    s = section_from_qubits(graph, [0, 1])
    t = transpile(logical_circuit(s, 1, "A", [0.3, 0.4]))
    assert [g.kind for g in t.gates] == ["RX", "RX", "CNOT", "RZ", "CNOT"]
    assert t.gates[2].qubits == (0, 1) and t.gates[3].qubits == (1,)
    with pytest.raises(ValueError):
        transpile(t)


def test_cnot_count(graph):
    rng = np.random.default_rng(4)
    for _ in range(10):
        s = sample_section(graph, int(rng.integers(2, 10)), rng)
        p = int(rng.integers(1, 5))
        t = transpile(build_circuit(s, p, "A", rng))
        assert sum(g.kind == "CNOT" for g in t.gates) == 2 * p * len(s.induced_edges)


def test_transpiled_overlap_with_dense_oracle(graph):
    s = section_from_qubits(graph, [1, 2, 3])
    c = build_circuit(s, 1, "A", np.random.default_rng(6))
    psi0 = np.zeros(8, dtype=complex)
    psi0[0] = 1
    a = circuit_unitary(c) @ psi0
    b = circuit_unitary(transpile(c)) @ psi0
    assert abs(abs(np.vdot(a, b)) - 1) < 1e-10
    assert np.max(np.abs(final_state(transpile(c)) - b)) < 1e-10


def test_json_round_trip(graph):
    c = build_circuit(sample_section(graph, 4, np.random.default_rng(0)), 3, "B", np.random.default_rng(1))
    back = Circuit.from_json(c.to_json(), graph)
    assert back.gates == c.gates and back.theta == c.theta


@settings(max_examples=40, deadline=None)
@given(n=st.integers(2, 6), p=st.integers(1, 4), config=st.sampled_from("AB"), seed=st.integers(0, 2**31))
def test_logical_and_transpiled_agree(n, p, config, seed):
    g = build_chip_graph()
    rng = np.random.default_rng(seed)
    c = build_circuit(sample_section(g, n, rng), p, config, rng)
    assert np.max(np.abs(run_exact(c).z - run_exact(transpile(c)).z)) < 1e-10


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_rzz_order_is_irrelevant(seed):
    from dataclasses import replace

    g = build_chip_graph()
    rng = np.random.default_rng(seed)
    c = build_circuit(sample_section(g, 6, rng), 2, "A", rng)
    gates = list(c.gates)
    per_layer = c.n + len(c.section.induced_edges)
    for start in range(0, len(gates), per_layer):
        block = gates[start + c.n:start + per_layer]
        gates[start + c.n:start + per_layer] = [block[i] for i in rng.permutation(len(block))]
    shuffled = replace(c, gates=tuple(gates))
    assert np.max(np.abs(final_state(c) - final_state(shuffled))) < 1e-12
