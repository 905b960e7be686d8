import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qsynergy.chip import build_chip_graph, sample_section, section_from_qubits
from qsynergy.circuits import build_circuit, logical_circuit, transpile
from qsynergy.noise import NoiseModel, identity_channel, scale_cnot_noise
from qsynergy.simulator import run_exact
from qsynergy.zne import EstimatorSettings, ZneEstimate, fold_circuit, richardson, zne_estimate


def small_circuit(graph, seed, n=4, p=3):
    rng = np.random.default_rng(seed)
    return transpile(build_circuit(sample_section(graph, n, rng), p, "A", rng))


def test_fold_counts(graph):
    c = small_circuit(graph, 0)
    g = len(c.gates)
    assert fold_circuit(c, 1) is c
    assert len(fold_circuit(c, 3).gates) == 3 * g
    assert len(fold_circuit(c, 2, np.random.default_rng(0)).gates) == g + 2 * (g // 2)


def test_fold_odd_gate_count(graph):
    c = transpile(logical_circuit(section_from_qubits(graph, [0, 1]), 1, "A", [0.1, 0.2]))
    assert len(c.gates) == 5
    assert len(fold_circuit(c, 2, np.random.default_rng(1)).gates) == 5 + 4


def test_fold_rejects(graph):
    c = small_circuit(graph, 1)
    with pytest.raises(ValueError):
        fold_circuit(c, 4, np.random.default_rng(0))
    with pytest.raises(ValueError):
        fold_circuit(c, 2)
    logical = build_circuit(section_from_qubits(graph, [0, 1]), 1, "A", np.random.default_rng(0))
    with pytest.raises(ValueError):
        fold_circuit(logical, 3)


def test_fold_choice_replays(graph):
    c = small_circuit(graph, 2)
    a = fold_circuit(c, 2, np.random.default_rng(5))
    b = fold_circuit(c, 2, np.random.default_rng(5))
    assert a.gates == b.gates


@settings(max_examples=25, deadline=None)
@given(n=st.integers(2, 5), p=st.integers(1, 4), scale=st.sampled_from([2, 3]), seed=st.integers(0, 2**31))
def test_folding_preserves_noiseless_output(n, p, scale, seed):
    g = build_chip_graph()
    rng = np.random.default_rng(seed)
    c = transpile(build_circuit(sample_section(g, n, rng), p, "B", rng))
    folded = fold_circuit(c, scale, rng)
    assert np.max(np.abs(run_exact(folded).z - run_exact(c).z)) < 1e-9


def test_richardson_closed_form():
    assert richardson((1, 2, 3), (0.9, 0.8, 0.7)) == pytest.approx(1.0, abs=1e-12)
    assert richardson((1, 2, 3), (0.3, 0.3, 0.3)) == pytest.approx(0.3, abs=1e-12)
    assert richardson((1, 3), (1.0, 2.0)) == pytest.approx(0.5, abs=1e-12)


def test_richardson_random_quadratics():
    rng = np.random.default_rng(10)
    for a, b, c in rng.uniform(-2, 2, size=(200, 3)):
        v = [a + b * lam + c * lam ** 2 for lam in (1, 2, 3)]
        assert abs(richardson((1, 2, 3), v) - a) < 1e-12
        assert abs((3 * v[0] - 3 * v[1] + v[2]) - a) < 1e-12


@settings(max_examples=50, deadline=None)
@given(coef=st.lists(st.floats(-5, 5), min_size=1, max_size=4), extra=st.integers(0, 2))
def test_richardson_exact_below_point_count(coef, extra):
    lams = [1.0, 1.5, 2.0, 3.0, 4.0, 5.0][:len(coef) + extra]
    if len(lams) < 2:
        lams = [1.0, 2.0]
    vals = [sum(c * lam ** k for k, c in enumerate(coef)) for lam in lams]
    assert richardson(lams, vals) == pytest.approx(coef[0], abs=1e-9 * (1 + max(map(abs, coef))))


def test_richardson_errors():
    with pytest.raises(ValueError):
        richardson((1, 1, 2), (0.1, 0.2, 0.3))
    with pytest.raises(ValueError):
        richardson((1,), (0.1,))
    with pytest.raises(ValueError):
        richardson((1, 2), (0.1,))


def test_estimate_invariants():
    with pytest.raises(ValueError):
        ZneEstimate((2, 1), (0.1, 0.2), 0.0)
    with pytest.raises(ValueError):
        ZneEstimate((0.5, 1), (0.1, 0.2), 0.0)
    with pytest.raises(ValueError):
        ZneEstimate((1, 2), (0.1,), 0.0)
    assert ZneEstimate((1, 2, 3), (0.5, 0.4, 0.3), 0.6).to_json() == {"1": 0.5, "2": 0.4, "3": 0.3, "extrapolated": 0.6}


def test_identity_noise_gives_flat_data(graph):
    c = small_circuit(graph, 3)
    ident = NoiseModel({e: identity_channel(2) for e in graph.edges})
    est = zne_estimate(c, ident, EstimatorSettings(n_traj=8), np.random.default_rng(0))
    exact = run_exact(c).m_z
    assert np.allclose(est.values, exact, atol=1e-10)
    assert est.extrapolated == pytest.approx(exact, abs=1e-10)


def test_readout_bias_not_removed(graph, noise):
    c = transpile(logical_circuit(section_from_qubits(graph, [3, 5, 8]), 4, "A", [0.0, 0.0, 0.0]))
    est = zne_estimate(c, scale_cnot_noise(noise, 0.0), EstimatorSettings(n_traj=2000), np.random.default_rng(1))
    assert abs(est.extrapolated - 1.0) > 0.02


def test_estimator_determinism_and_meta(graph, noise):
    c = small_circuit(graph, 4)
    for settings_ in (EstimatorSettings(n_traj=32), EstimatorSettings("shots", n_shots=64)):
        a = zne_estimate(c, noise, settings_, np.random.default_rng(9))
        b = zne_estimate(c, noise, settings_, np.random.default_rng(9))
        assert a == b
        assert EstimatorSettings.from_meta(settings_.meta()) == settings_
    with pytest.raises(ValueError):
        EstimatorSettings("magic")
    with pytest.raises(ValueError):
        EstimatorSettings(n_traj=0)


def test_zne_usually_improves_small_circuits(graph, noise):
    rng = np.random.default_rng(2025)
    settings_ = EstimatorSettings(n_traj=10_000)
    wins = 0
    for _ in range(50):
        c = build_circuit(sample_section(graph, 3, rng), 4, "A", rng)
        exact = run_exact(c).m_z
        est = zne_estimate(transpile(c), noise, settings_, rng)
        wins += abs(est.extrapolated - exact) <= abs(est.values[0] - exact)
    assert wins >= 35
