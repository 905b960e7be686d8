"""Experiment recipes: corpus generation, seeded training and method comparison.

A protocol fixes the data (train/validation corpus at small N, test sets at
larger N). Test data are shared by every training seed; only the network
initialisation and batch order change between repetitions.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .chip import ChipGraph, build_chip_graph
from .cnn import CnnModel, TrainConfig, TrainResult, build_model, load_model, predict_batch, save_model, train
from .dataset import CircuitRecord, GenerationSpec, generate, read_jsonl, write_jsonl
from .metrics import evaluate
from .noise import NoiseModel, scale_cnot_noise
from .zne import EstimatorSettings

log = logging.getLogger(__name__)

INPUT_KINDS = ("hybrid", "classical")
METHODS = ("cnn_hybrid", "cnn_classical", "noisy", "zne")
ROW_FIELDS = ("n", "method", "r2", "one_minus_r2", "pearson", "mse", "k_test", "seed")

_TRAIN_STREAM, _TEST_STREAM, _MODEL_STREAM = 0, 1, 2


def sub_seed(*keys: int) -> int:
    """A 32-bit seed derived from a tuple of non-negative integers."""
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


@dataclass(frozen=True)
class Protocol:
    config: str = "A"
    n_train: tuple[int, ...] = (4, 5, 6, 7)
    n_test: tuple[int, ...] = (10,)
    p_layers: int = 8
    k_train: int = 5000
    k_val: int = 500
    k_test: int = 500
    data_seed: int = 0
    estimator: EstimatorSettings = EstimatorSettings()
    test_zne: bool = False
    train_cfg: TrainConfig = field(default_factory=TrainConfig)

    @property
    def dims(self) -> int:
        return 1 if self.config == "A" else 2

    def train_spec(self) -> GenerationSpec:
        # validation records are the tail of the same stream as the training ones
        return GenerationSpec(self.config, tuple(self.n_train), self.p_layers, self.k_train + self.k_val,
                              sub_seed(self.data_seed, _TRAIN_STREAM), self.estimator)

    def test_spec(self, n: int) -> GenerationSpec:
        return GenerationSpec(self.config, (n,), self.p_layers, self.k_test,
                              sub_seed(self.data_seed, _TEST_STREAM, n), self.estimator, self.test_zne)


@dataclass
class Corpus:
    train: list[CircuitRecord]
    val: list[CircuitRecord]
    tests: dict[int, list[CircuitRecord]]


def _cached(path: Path | None, make) -> list[CircuitRecord]:
    if path is not None and path.exists():
        return read_jsonl(path)
    records = list(make())
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        write_jsonl(records, path)
    return records


def _corpus_key(p: Protocol, tag: str) -> str:
    return f"{tag}{p.config}_P{p.p_layers}_s{p.data_seed}_{p.estimator.kind}{p.estimator.n_traj}"


def make_corpus(protocol: Protocol, noise: NoiseModel, graph: ChipGraph | None = None,
                workers: int = 1, cache_dir: str | Path | None = None, tag: str = "") -> Corpus:
    """Generate (or reload from ``cache_dir``) every dataset a protocol needs.

    Cached files are keyed by ``tag`` plus the protocol fields that affect
    their content; callers must change ``tag`` when the noise model changes.
    """
    graph = graph or build_chip_graph()
    cache = Path(cache_dir) if cache_dir is not None else None
    p = protocol
    key = _corpus_key(p, tag)

    def path(name):
        return None if cache is None else cache / f"{key}_{name}.jsonl"

    pool = _cached(path(f"train_N{min(p.n_train)}-{max(p.n_train)}_K{p.k_train + p.k_val}"),
                   lambda: generate(p.train_spec(), noise, graph, workers))
    tests = {}
    for n in p.n_test:
        name = f"test_N{n}_K{p.k_test}{'_zne' if p.test_zne else ''}"
        tests[n] = _cached(path(name), lambda n=n: generate(p.test_spec(n), noise, graph, workers))
    return Corpus(pool[:p.k_train], pool[p.k_train:], tests)


def fit(protocol: Protocol, corpus: Corpus, inputs: str, seed: int) -> TrainResult:
    """Train one network; ``seed`` fixes initialisation and batch order."""
    if inputs not in INPUT_KINDS:
        raise ValueError(f"inputs must be one of {INPUT_KINDS}")
    with_noisy = inputs == "hybrid"
    init_rng, order_rng = (np.random.default_rng(s) for s in
                           np.random.SeedSequence([seed, _MODEL_STREAM, int(with_noisy)]).spawn(2))
    model = build_model(protocol.dims, 3 if with_noisy else 2, init_rng)
    result = train(model, corpus.train, corpus.val, protocol.train_cfg, order_rng, with_noisy)
    model.meta.update({"inputs": inputs, "seed": seed, "config": protocol.config,
                       "best_epoch": result.best_epoch, "train_config": protocol.train_cfg.to_json()})
    log.info("%s seed %d: best epoch %d, val mse %.3e", inputs, seed, result.best_epoch,
             result.history[result.best_epoch - 1]["val_mse"])
    return result


def _fit_cached(protocol: Protocol, corpus: Corpus, inputs: str, seed: int, path: Path | None) -> TrainResult:
    """``fit`` with the trained model and its history kept at ``path``."""
    hist_path = None if path is None else path.with_suffix(".history.json")
    if path is not None and path.exists() and hist_path.exists():
        log.info("%s seed %d: reusing %s", inputs, seed, path.name)
        hist = json.loads(hist_path.read_text(encoding="utf-8"))
        return TrainResult(load_model(path), hist["history"], hist["best_epoch"])
    result = fit(protocol, corpus, inputs, seed)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        # write-then-rename so an interrupted run never leaves a partial file
        tmp = hist_path.with_suffix(".tmp")
        tmp.write_text(json.dumps({"best_epoch": result.best_epoch, "history": result.history}), encoding="utf-8")
        os.replace(tmp, hist_path)
        save_model(result.model, tmp)
        os.replace(tmp, path)
    return result


def _row(n, method, report, seed) -> dict:
    return {"n": n, "method": method, "r2": report.r_squared, "one_minus_r2": report.one_minus_r2,
            "pearson": report.pearson, "mse": report.mse, "k_test": report.k_test, "seed": seed}


def model_rows(model: CnnModel, tests: dict[int, list[CircuitRecord]], seed=None) -> list[dict]:
    inputs = model.meta.get("inputs", "hybrid" if model.in_channels == 3 else "classical")
    seed = model.meta.get("seed", "") if seed is None else seed
    rows = []
    for n, records in sorted(tests.items()):
        y = [r.m_z_exact for r in records]
        rows.append(_row(n, f"cnn_{inputs}", evaluate(y, predict_batch(model, records)), seed))
    return rows


def baseline_rows(tests: dict[int, list[CircuitRecord]], with_zne: bool) -> list[dict]:
    """The raw noisy magnetization (and optionally ZNE) used directly as the predictor."""
    rows = []
    for n, records in sorted(tests.items()):
        y = [r.m_z_exact for r in records]
        rows.append(_row(n, "noisy", evaluate(y, [r.m_z_noisy for r in records]), ""))
        if with_zne:
            missing = sum(r.zne is None for r in records)
            if missing:
                raise ValueError(f"{missing} test records at N={n} lack ZNE estimates")
            rows.append(_row(n, "zne", evaluate(y, [r.zne["extrapolated"] for r in records]), ""))
    return rows


def summarize(rows: list[dict]) -> list[dict]:
    """Mean and standard deviation (ddof=1 when repeated) of every metric per (n, method)."""
    groups: dict[tuple, list[dict]] = {}
    for r in rows:
        groups.setdefault((r["n"], r["method"]), []).append(r)
    out = []
    for (n, method), group in groups.items():
        entry = {"n": n, "method": method, "repeats": len(group)}
        for key in ("r2", "one_minus_r2", "pearson", "mse"):
            vals = np.array([g[key] for g in group], dtype=float)
            entry[f"{key}_mean"] = float(vals.mean())
            entry[f"{key}_std"] = float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
        out.append(entry)
    return out


@dataclass
class SynergyResult:
    corpus: Corpus
    rows: list[dict]
    models: dict[tuple[str, int], CnnModel]
    histories: dict[tuple[str, int], list[dict]]

    def summary(self) -> list[dict]:
        return summarize(self.rows)

    def mean(self, method: str, key: str = "one_minus_r2", n: int | None = None) -> float:
        vals = [r[key] for r in self.rows if r["method"] == method and (n is None or r["n"] == n)]
        if not vals:
            raise KeyError(method)
        return float(np.mean(vals))

    def std(self, method: str, key: str = "one_minus_r2", n: int | None = None) -> float:
        vals = [r[key] for r in self.rows if r["method"] == method and (n is None or r["n"] == n)]
        return float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0


def synergy(protocol: Protocol, noise: NoiseModel, seeds=(0, 1, 2), inputs=INPUT_KINDS,
            graph: ChipGraph | None = None, workers: int = 1, cache_dir=None, tag: str = "",
            corpus: Corpus | None = None) -> SynergyResult:
    """Hybrid versus classical networks versus raw noisy (and ZNE) estimates.

    With ``cache_dir`` both the corpora and the trained models are reused
    across calls; ``tag`` must identify the noise model.
    """
    if not seeds:
        raise ValueError("at least one seed is required")
    corpus = corpus or make_corpus(protocol, noise, graph, workers, cache_dir, tag)
    rows = baseline_rows(corpus.tests, protocol.test_zne)
    models, histories = {}, {}
    cfg = json.dumps(protocol.train_cfg.to_json(), sort_keys=True).encode()
    model_key = (f"{_corpus_key(protocol, tag)}_N{min(protocol.n_train)}-{max(protocol.n_train)}"
                 f"_K{len(corpus.train)}+{len(corpus.val)}_t{hashlib.sha256(cfg).hexdigest()[:12]}")
    for kind in inputs:
        for seed in seeds:
            path = None if cache_dir is None else Path(cache_dir) / f"{model_key}_{kind}_seed{seed}.qcnn"
            result = _fit_cached(protocol, corpus, kind, seed, path)
            models[kind, seed] = result.model
            histories[kind, seed] = result.history
            rows += model_rows(result.model, corpus.tests, seed)
    return SynergyResult(corpus, rows, models, histories)


def sweep(var: str, values, protocol: Protocol, base_noise: NoiseModel, seeds=(0, 1, 2),
          inputs=INPUT_KINDS, graph: ChipGraph | None = None, workers: int = 1,
          cache_dir=None) -> list[dict]:
    """Rerun the synergy comparison for each value of ``p_noise`` or ``k_train``.

    Circuit structure depends only on the data seed, so every p_noise point
    sees the same circuits; a k_train point trains on a prefix of the largest
    corpus. Rows carry the swept value in a ``var`` column.
    """
    values = list(values)
    if not values:
        raise ValueError("no sweep values given")
    if var not in ("p_noise", "k_train"):
        raise ValueError(f"cannot sweep over {var!r}")
    rows = []
    if var == "k_train":
        largest = replace(protocol, k_train=max(int(v) for v in values))
        full = make_corpus(largest, base_noise, graph, workers, cache_dir)
    for v in values:
        if var == "p_noise":
            noise = scale_cnot_noise(base_noise, float(v))
            corpus = None
            tag = f"p{float(v):g}_"
        else:
            noise, tag = base_noise, ""
            corpus = Corpus(full.train[:int(v)], full.val, full.tests)
        res = synergy(protocol, noise, seeds, inputs, graph, workers, cache_dir, tag, corpus)
        rows += [{var: v, **r} for r in res.rows]
    return rows


def scatter_rows(model: CnnModel, records: list[CircuitRecord]) -> list[dict]:
    """Per-circuit target alongside the network, raw noisy and ZNE estimates."""
    preds = predict_batch(model, records)
    return [{"id": r.id, "n": r.n, "target": r.m_z_exact, "cnn": float(p), "noisy": r.m_z_noisy,
             "zne": r.zne["extrapolated"] if r.zne is not None else float("nan")}
            for r, p in zip(records, preds)]
