"""Generation, JSON Lines storage and splitting of circuit records."""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .chip import ChipGraph, build_chip_graph, sample_section, section_from_qubits
from .circuits import DEFAULT_PHI, Circuit, build_circuit, logical_circuit, transpile
from .noise import NoiseModel
from .simulator import run_exact
from .zne import EstimatorSettings, zne_estimate

SCHEMA_VERSION = 1


class SchemaError(ValueError):
    pass


@dataclass(frozen=True)
class CircuitRecord:
    id: int
    config: str
    n: int
    p_layers: int
    q: tuple[int, ...]
    theta: tuple[float, ...]
    z_noisy: tuple[float, ...]
    m_z_exact: float
    m_z_noisy: float
    p_noise: float
    estimator_meta: dict
    seed: int
    phi: float = DEFAULT_PHI
    zne: dict | None = None

    def __post_init__(self):
        if len(self.q) != self.n or len(self.z_noisy) != self.n:
            raise ValueError(f"record {self.id}: q and z_noisy must have length n={self.n}")
        expected = self.n if self.config == "A" else self.p_layers
        if len(self.theta) != expected:
            raise ValueError(f"record {self.id}: theta must have length {expected}")
        if abs(self.m_z_noisy - float(np.mean(self.z_noisy))) > 1e-10:
            raise ValueError(f"record {self.id}: m_z_noisy is not the mean of z_noisy")
        if abs(self.m_z_exact) > 1 or any(abs(z) > 1 for z in self.z_noisy):
            raise ValueError(f"record {self.id}: expectation values outside [-1, 1]")

    def circuit(self, graph: ChipGraph) -> Circuit:
        section = section_from_qubits(graph, self.q)
        return logical_circuit(section, self.p_layers, self.config, self.theta, phi=self.phi, seed=self.seed)

    def to_json(self) -> dict:
        d = asdict(self)
        d["q"] = list(self.q)
        d["theta"] = list(self.theta)
        d["z_noisy"] = list(self.z_noisy)
        return d

    @classmethod
    def from_json(cls, d: dict) -> CircuitRecord:
        return cls(
            id=int(d["id"]), config=d["config"], n=int(d["n"]), p_layers=int(d["p_layers"]),
            q=tuple(int(x) for x in d["q"]), theta=tuple(float(x) for x in d["theta"]),
            z_noisy=tuple(float(x) for x in d["z_noisy"]), m_z_exact=float(d["m_z_exact"]),
            m_z_noisy=float(d["m_z_noisy"]), p_noise=float(d["p_noise"]),
            estimator_meta=dict(d["estimator_meta"]), seed=int(d["seed"]),
            phi=float(d.get("phi", DEFAULT_PHI)), zne=d.get("zne"),
        )


def record_seed(master_seed: int, index: int) -> int:
    return int(np.random.SeedSequence([master_seed, index]).generate_state(1)[0])


def _streams(seed: int) -> list[np.random.Generator]:
    """Independent generators for structure, noisy estimation and ZNE."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3)]


def simulate_record(circuit: Circuit, noise: NoiseModel, estimator: EstimatorSettings,
                    seed: int, record_id: int = 0, with_zne: bool = False) -> CircuitRecord:
    """Exact and noisy expectation values for a logical circuit."""
    _, noisy_rng, zne_rng = _streams(seed)
    compiled = transpile(circuit)
    exact = run_exact(circuit)
    noisy = estimator.run(compiled, noise, noisy_rng)
    zne = None
    if with_zne:
        zne = zne_estimate(compiled, noise, estimator, zne_rng).to_json()
    z = tuple(float(v) for v in noisy.z)
    return CircuitRecord(
        id=record_id, config=circuit.config, n=circuit.n, p_layers=circuit.p_layers,
        q=tuple(circuit.q), theta=tuple(circuit.theta), z_noisy=z,
        m_z_exact=float(exact.m_z), m_z_noisy=float(np.mean(z)), p_noise=noise.p_noise,
        estimator_meta=estimator.meta(), seed=seed, phi=circuit.phi, zne=zne,
    )


def attach_zne(record: CircuitRecord, noise: NoiseModel, graph: ChipGraph,
               estimator: EstimatorSettings | None = None) -> CircuitRecord:
    """Fill in the ZNE estimate using the record's own ZNE random stream."""
    if record.zne is not None:
        return record
    estimator = estimator or EstimatorSettings.from_meta(record.estimator_meta)
    _, _, zne_rng = _streams(record.seed)
    compiled = transpile(record.circuit(graph))
    return replace(record, zne=zne_estimate(compiled, noise, estimator, zne_rng).to_json())


@dataclass(frozen=True)
class GenerationSpec:
    config: str
    n_range: tuple[int, ...]
    p_layers: int
    count: int
    seed: int
    estimator: EstimatorSettings = EstimatorSettings()
    with_zne: bool = False
    phi: float = DEFAULT_PHI

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("count must be >= 1")
        if not self.n_range:
            raise ValueError("n_range is empty")
        if self.config not in ("A", "B"):
            raise ValueError(f"config must be 'A' or 'B', got {self.config!r}")


def make_record(spec: GenerationSpec, index: int, noise: NoiseModel, graph: ChipGraph) -> CircuitRecord:
    seed = record_seed(spec.seed, index)
    structure_rng = _streams(seed)[0]
    sizes = sorted(spec.n_range)
    n = sizes[int(structure_rng.integers(len(sizes)))]
    section = sample_section(graph, n, structure_rng)
    circuit = build_circuit(section, spec.p_layers, spec.config, structure_rng, phi=spec.phi)
    return simulate_record(circuit, noise, spec.estimator, seed, index, spec.with_zne)


def _make_chunk(args) -> list[CircuitRecord]:
    spec, indices, noise, graph = args
    return [make_record(spec, i, noise, graph) for i in indices]


def generate(spec: GenerationSpec, noise: NoiseModel, graph: ChipGraph | None = None,
             workers: int = 1, start: int = 0) -> Iterator[CircuitRecord]:
    """Yield records ``start .. start + count - 1`` in index order.

    Record ``i`` depends only on ``(spec.seed, i)``, so output is identical for
    any worker count, and a prefix of a larger corpus equals a smaller one.
    """
    graph = graph or build_chip_graph()
    indices = range(start, start + spec.count)
    if workers <= 1:
        for i in indices:
            yield make_record(spec, i, noise, graph)
        return
    chunk = 16
    jobs = [(spec, list(indices[k:k + chunk]), noise, graph) for k in range(0, len(indices), chunk)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for batch in pool.map(_make_chunk, jobs):
            yield from batch


def write_jsonl(records: Iterable[CircuitRecord], path: str | Path) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"schema": SCHEMA_VERSION}) + "\n")
        for rec in records:
            fh.write(json.dumps(rec.to_json()) + "\n")
            count += 1
    return count


def iter_jsonl(path: str | Path) -> Iterator[CircuitRecord]:
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
        try:
            header = json.loads(first)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: missing schema header") from exc
        if not isinstance(header, dict) or header.get("schema") != SCHEMA_VERSION:
            raise SchemaError(f"{path}: expected schema {SCHEMA_VERSION}, found {header!r}")
        for line_no, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                yield CircuitRecord.from_json(json.loads(line))
            except (KeyError, TypeError, json.JSONDecodeError) as exc:
                raise SchemaError(f"{path}:{line_no}: malformed record") from exc


def read_jsonl(path: str | Path) -> list[CircuitRecord]:
    return list(iter_jsonl(path))


def split(records, fractions=(0.8, 0.1, 0.1), rng: np.random.Generator | None = None):
    """Shuffle and cut into (train, validation, test) parts."""
    records = list(records)
    fractions = np.asarray(fractions, dtype=float)
    if fractions.shape != (3,) or np.any(fractions < 0) or abs(fractions.sum() - 1.0) > 1e-9:
        raise ValueError(f"fractions must be three non-negative numbers summing to 1, got {fractions}")
    n = len(records)
    raw = fractions * n
    sizes = np.floor(raw).astype(int)
    for i in np.argsort(-(raw - sizes), kind="stable")[: n - sizes.sum()]:
        sizes[i] += 1
    if np.any((fractions > 0) & (sizes == 0)):
        raise ValueError(f"{n} records cannot fill every partition with a nonzero fraction")
    rng = np.random.default_rng() if rng is None else rng
    order = rng.permutation(n)
    cuts = np.cumsum(sizes)[:-1]
    return tuple([records[i] for i in part] for part in np.split(order, cuts))
