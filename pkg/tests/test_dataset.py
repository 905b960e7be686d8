import hashlib
import json
import tracemalloc
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qsynergy.chip import section_from_qubits
from qsynergy.circuits import logical_circuit
from qsynergy.dataset import (
    CircuitRecord, GenerationSpec, SchemaError, attach_zne, generate, iter_jsonl, read_jsonl,
    record_seed, simulate_record, split, write_jsonl,
)
from qsynergy.zne import EstimatorSettings

FAST = EstimatorSettings(n_traj=16)


def small_corpus(noise, graph, count=20, config="A", seed=3, sizes=(2, 3, 4), layers=3, **kw):
    return list(generate(GenerationSpec(config, sizes, layers, count, seed, FAST, **kw), noise, graph))


def test_records_respect_spec(noise, graph):
    recs = list(generate(GenerationSpec("A", (6, 7, 8, 9, 10), 20, 6, 1, FAST), noise, graph))
    assert all(6 <= r.n <= 10 and r.p_layers == 20 for r in recs)
    assert [r.id for r in recs] == list(range(6))
    for r in recs:
        assert len(r.theta) == r.n and all(0 <= t <= np.pi / 2 for t in r.theta)
        assert r.circuit(graph).q == r.q
        assert r.m_z_noisy == pytest.approx(np.mean(r.z_noisy), abs=1e-12)


def test_config_b_records(noise, graph):
    recs = small_corpus(noise, graph, 5, "B", layers=4)
    assert all(len(r.theta) == 4 for r in recs)


def test_full_chip_records(noise, graph):
    rec = next(generate(GenerationSpec("B", (16,), 1, 1, 0, EstimatorSettings(n_traj=2)), noise, graph))
    assert rec.q == tuple(range(16))


def test_zero_angle_record(noise, graph):
    c = logical_circuit(section_from_qubits(graph, [0, 1]), 1, "A", [0.0, 0.0])
    rec = simulate_record(c, noise, EstimatorSettings(n_traj=200), seed=5)
    assert rec.m_z_exact == pytest.approx(1.0, abs=1e-12)
    assert rec.m_z_noisy == pytest.approx(1.0, abs=0.1)


def test_replay_is_byte_identical(noise, graph, tmp_path):
    digests = []
    for name in ("a", "b"):
        path = tmp_path / f"{name}.jsonl"
        write_jsonl(small_corpus(noise, graph), path)
        digests.append(hashlib.sha256(path.read_bytes()).hexdigest())
    assert digests[0] == digests[1]


def test_prefix_and_worker_independence(noise, graph):
    full = small_corpus(noise, graph, 12)
    assert small_corpus(noise, graph, 5) == full[:5]
    tail = list(generate(GenerationSpec("A", (2, 3, 4), 3, 4, 3, FAST), noise, graph, start=8))
    assert tail == full[8:]
    assert list(generate(GenerationSpec("A", (2, 3, 4), 3, 12, 3, FAST), noise, graph, workers=2)) == full


def test_structure_does_not_depend_on_noise(noise, graph):
    from qsynergy.noise import scale_cnot_noise

    a = small_corpus(noise, graph, 8)
    b = small_corpus(scale_cnot_noise(noise, 0.25), graph, 8)
    assert [(r.q, r.theta, r.m_z_exact) for r in a] == [(r.q, r.theta, r.m_z_exact) for r in b]
    assert all(r.p_noise == 0.25 for r in b)


def test_seeds_are_distinct():
    seeds = {record_seed(7, i) for i in range(1000)}
    assert len(seeds) == 1000


def test_round_trip(noise, graph, tmp_path):
    recs = small_corpus(noise, graph, 100)
    path = tmp_path / "r.jsonl"
    assert write_jsonl(recs, path) == 100
    back = read_jsonl(path)
    assert back == recs
    assert json.loads(path.read_text().splitlines()[0]) == {"schema": 1}


def test_zne_fields_round_trip(noise, graph, tmp_path):
    recs = small_corpus(noise, graph, 3, with_zne=True)
    assert all(set(r.zne) == {"1", "2", "3", "extrapolated"} for r in recs)
    path = tmp_path / "z.jsonl"
    write_jsonl(recs, path)
    assert read_jsonl(path) == recs
    # filling in later uses the same stream as generating with ZNE up front
    plain = small_corpus(noise, graph, 3)
    assert [attach_zne(r, noise, graph) for r in plain] == recs


def test_wrong_schema_rejected(tmp_path, noise, graph):
    path = tmp_path / "bad.jsonl"
    lines = [json.dumps({"schema": 2})] + [json.dumps(r.to_json()) for r in small_corpus(noise, graph, 2)]
    path.write_text("\n".join(lines) + "\n")
    it = iter_jsonl(path)
    with pytest.raises(SchemaError):
        next(it)
    path.write_text("not json\n")
    with pytest.raises(SchemaError):
        read_jsonl(path)


def test_malformed_line(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"schema": 1}\n{"id": 1}\n')
    with pytest.raises(SchemaError):
        read_jsonl(path)


def test_streaming_read_memory(noise, graph, tmp_path):
    rec = small_corpus(noise, graph, 1)[0]
    path = tmp_path / "big.jsonl"
    write_jsonl((replace(rec, id=i) for i in range(10_000)), path)
    tracemalloc.start()
    count = 0
    for _ in iter_jsonl(path):
        count += 1
    _, peak = tracemalloc.get_traced_memory()
    tracemalloc.stop()
    assert count == 10_000
    assert peak < 200_000  # far below what holding every record would take


def test_record_invariants(noise, graph):
    rec = small_corpus(noise, graph, 1)[0]
    with pytest.raises(ValueError):
        replace(rec, m_z_noisy=rec.m_z_noisy + 0.1)
    with pytest.raises(ValueError):
        replace(rec, q=rec.q[:-1])
    with pytest.raises(ValueError):
        replace(rec, theta=rec.theta + (0.1,))
    with pytest.raises(ValueError):
        replace(rec, m_z_exact=1.5)


def test_generation_spec_validation():
    with pytest.raises(ValueError):
        GenerationSpec("A", (4,), 2, 0, 1)
    with pytest.raises(ValueError):
        GenerationSpec("C", (4,), 2, 1, 1)
    with pytest.raises(ValueError):
        GenerationSpec("A", (), 2, 1, 1)


def test_split_sizes_and_replay():
    items = list(range(100))
    tr, va, te = split(items, (0.8, 0.1, 0.1), np.random.default_rng(0))
    assert (len(tr), len(va), len(te)) == (80, 10, 10)
    assert sorted(tr + va + te) == items
    again = split(items, (0.8, 0.1, 0.1), np.random.default_rng(0))
    assert (tr, va, te) == again
    tr, va, te = split(items, (1, 0, 0), np.random.default_rng(0))
    assert len(tr) == 100 and va == [] and te == []


def test_split_errors():
    with pytest.raises(ValueError):
        split(list(range(2)), (0.5, 0.25, 0.25), np.random.default_rng(0))
    with pytest.raises(ValueError):
        split(list(range(10)), (0.5, 0.5, 0.5), np.random.default_rng(0))


@settings(max_examples=50, deadline=None)
@given(n=st.integers(30, 500), a=st.floats(0.1, 0.9), seed=st.integers(0, 1000))
def test_split_is_a_partition(n, a, seed):
    b = (1 - a) / 2
    parts = split(list(range(n)), (a, b, 1 - a - b), np.random.default_rng(seed))
    assert sorted(sum(parts, [])) == list(range(n))
    assert abs(len(parts[0]) - a * n) < 1
