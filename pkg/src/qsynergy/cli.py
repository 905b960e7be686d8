"""Command-line entry point: ``qsynergy <command> [options]``.

Commands
    gen      simulate a corpus of random circuits into a JSON Lines file
    train    fit a hybrid or classical network on a corpus
    eval     score networks and the noisy/ZNE baselines on test files (CSV)
    sweep    repeat generate/train/eval over p_noise or k_train values (CSV)
    scatter  per-circuit target, network, noisy and ZNE values (CSV)
    zne      per-circuit zero-noise extrapolation (JSON)

Every command is deterministic for a given ``--seed`` when run with
``--threads 1``. Exit codes: 0 success, 2 usage, 3 I/O, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4

log = logging.getLogger("qsynergy")


class UsageError(Exception):
    pass


def parse_int_set(text: str) -> tuple[int, ...]:
    """``"6..10"`` or ``"4,6,8"`` (or a mix such as ``"4,6..8"``) to sorted unique ints."""
    out = set()
    try:
        for part in text.split(","):
            part = part.strip()
            if ".." in part:
                lo, hi = (int(x) for x in part.split(".."))
                if hi < lo:
                    raise UsageError(f"empty range {part!r}")
                out.update(range(lo, hi + 1))
            elif part:
                out.add(int(part))
    except ValueError as exc:
        raise UsageError(f"cannot parse integer list {text!r}") from exc
    if not out:
        raise UsageError("empty integer list")
    return tuple(sorted(out))


def parse_values(text: str) -> list[str]:
    values = [v.strip() for v in text.split(",") if v.strip()]
    if not values:
        raise UsageError("no values given")
    return values


def _positive(name: str, value: int) -> None:
    if value < 1:
        raise UsageError(f"{name} must be >= 1, got {value}")


# --- shared helpers ---------------------------------------------------------

def _graph_and_noise(args):
    from .chip import build_chip_graph
    from .noise import default_model, load_noise_config

    graph = build_chip_graph()
    noise = load_noise_config(args.noise_config, graph) if args.noise_config else default_model(graph)
    return graph, noise


def _noise_at(base, p_noise: float):
    from .noise import scale_cnot_noise

    if not 0.0 <= p_noise <= 1.0:
        raise UsageError(f"p_noise must lie in [0, 1], got {p_noise}")
    if base.p_noise == 0:
        return base
    return scale_cnot_noise(base, p_noise / base.p_noise)


def _estimator(args):
    from .zne import EstimatorSettings

    try:
        return EstimatorSettings(args.estimator, n_traj=args.n_traj, n_shots=args.n_shots)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _train_config(args):
    from .cnn import TrainConfig

    cfg = {}
    if getattr(args, "train_config", None):
        with open(args.train_config, encoding="utf-8") as fh:
            cfg = json.load(fh)
    for key in ("max_epochs", "patience", "batch_size", "lr"):
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    try:
        return TrainConfig.from_json(cfg)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad training configuration: {exc}") from exc


def _require_out(args) -> str:
    if not args.out:
        raise UsageError("an output path is required (--out / -o)")
    return args.out


def _write_csv(path: str, rows: list[dict], fields) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(fields), lineterminator="\n", extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})


def _summary_path(out: str) -> str:
    root, ext = os.path.splitext(out)
    return f"{root}.summary{ext or '.csv'}"


def _write_with_summary(out: str, rows: list[dict], fields) -> None:
    from .experiments import summarize

    _write_csv(out, rows, fields)
    summary = summarize(rows)
    if summary:
        _write_csv(_summary_path(out), summary, summary[0].keys())


def _load_records(path: str):
    from .dataset import read_jsonl

    records = read_jsonl(path)
    if not records:
        raise UsageError(f"{path} holds no records")
    return records


def _by_size(records) -> dict:
    groups: dict[int, list] = {}
    for r in records:
        groups.setdefault(r.n, []).append(r)
    return groups


# --- commands ---------------------------------------------------------------

def cmd_gen(args) -> int:
    from .dataset import GenerationSpec, generate, write_jsonl

    out = _require_out(args)
    _positive("--k", args.k)
    _positive("--layers", args.layers)
    if args.config not in ("A", "B"):
        raise UsageError("--config must be A or B")
    graph, base = _graph_and_noise(args)
    noise = _noise_at(base, args.p_noise)
    sizes = parse_int_set(args.n)
    if sizes[0] < 2 or sizes[-1] > graph.num_qubits:
        raise UsageError(f"--n must lie within 2..{graph.num_qubits}")
    spec = GenerationSpec(args.config, sizes, args.layers, args.k, args.seed, _estimator(args), args.zne)
    t0 = time.perf_counter()
    count = write_jsonl(generate(spec, noise, graph, workers=args.threads), out)
    print(f"wrote {count} records to {out} in {time.perf_counter() - t0:.1f}s", file=sys.stderr)
    return EXIT_OK


def cmd_train(args) -> int:
    import numpy as np

    from .cnn import TrainingDiverged, build_model, save_model, train
    from .dataset import split

    out = _require_out(args)
    cfg = _train_config(args)
    records = _load_records(args.data)
    configs = {r.config for r in records}
    if len(configs) > 1:
        raise UsageError(f"{args.data} mixes configurations {sorted(configs)}")
    config = configs.pop()
    if args.config and args.config != config:
        raise UsageError(f"--config {args.config} requested but {args.data} holds config {config} records")
    init_rng, split_rng, order_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(args.seed).spawn(3))
    if args.val:
        train_set, val_set = records, _load_records(args.val)
        if {r.config for r in val_set} != {config}:
            raise UsageError("validation records use a different configuration")
    else:
        if not 0.0 < args.val_fraction < 1.0:
            raise UsageError("--val-fraction must lie in (0, 1)")
        train_set, val_set, _ = split(records, (1.0 - args.val_fraction, args.val_fraction, 0.0), split_rng)
    with_noisy = args.inputs == "hybrid"
    model = build_model(1 if config == "A" else 2, 3 if with_noisy else 2, init_rng)
    t0 = time.perf_counter()
    try:
        result = train(model, train_set, val_set, cfg, order_rng, with_noisy)
    except TrainingDiverged as exc:
        print(f"error: training diverged at epoch {exc.epoch} (loss {exc.loss})", file=sys.stderr)
        return EXIT_NUMERIC
    model.meta.update({"inputs": args.inputs, "seed": args.seed, "config": config,
                       "best_epoch": result.best_epoch, "train_config": cfg.to_json(),
                       "k_train": len(train_set), "k_val": len(val_set)})
    save_model(model, out)
    history_path = args.history or os.path.splitext(out)[0] + ".history.json"
    with open(history_path, "w", encoding="utf-8") as fh:
        json.dump({"best_epoch": result.best_epoch, "history": result.history}, fh, indent=1)
    print(f"trained {args.inputs} model for {len(result.history)} epochs (best {result.best_epoch}) "
          f"in {time.perf_counter() - t0:.1f}s -> {out}", file=sys.stderr)
    return EXIT_OK


def cmd_eval(args) -> int:
    from .cnn import load_model
    from .experiments import ROW_FIELDS, baseline_rows, model_rows

    out = _require_out(args)
    if not args.test:
        raise UsageError("at least one --test file is required")
    records = [r for path in args.test for r in _load_records(path)]
    tests = _by_size(records)
    rows = baseline_rows(tests, args.zne)
    for path in args.model or []:
        model = load_model(path)
        if model.dims != (1 if records[0].config == "A" else 2):
            raise UsageError(f"{path} does not match the configuration of the test records")
        rows += model_rows(model, tests)
    _write_with_summary(out, rows, ROW_FIELDS)
    print(f"wrote {len(rows)} rows to {out}", file=sys.stderr)
    return EXIT_OK


def cmd_sweep(args) -> int:
    from .experiments import ROW_FIELDS, Protocol, sweep

    out = _require_out(args)
    values = parse_values(args.values)
    try:
        values = [float(v) if args.var == "p_noise" else int(v) for v in values]
    except ValueError as exc:
        raise UsageError(f"bad sweep value: {exc}") from exc
    seeds = parse_int_set(args.seeds) if args.seeds else (args.seed,)
    for name in ("k_train", "k_val", "k_test", "layers"):
        _positive("--" + name.replace("_", "-"), getattr(args, name))
    graph, noise = _graph_and_noise(args)
    protocol = Protocol(
        config=args.config, n_train=parse_int_set(args.n_train), n_test=parse_int_set(args.n_test),
        p_layers=args.layers, k_train=args.k_train, k_val=args.k_val, k_test=args.k_test,
        data_seed=args.seed, estimator=_estimator(args), test_zne=args.zne, train_cfg=_train_config(args),
    )
    inputs = ("hybrid", "classical") if args.inputs == "both" else (args.inputs,)
    rows = sweep(args.var, values, protocol, noise, seeds, inputs, graph, args.threads, args.cache_dir)
    _write_csv(out, rows, (args.var,) + ROW_FIELDS)
    print(f"wrote {len(rows)} rows to {out}", file=sys.stderr)
    return EXIT_OK


def cmd_scatter(args) -> int:
    from .cnn import load_model
    from .experiments import scatter_rows

    out = _require_out(args)
    model = load_model(args.model)
    records = [r for path in args.test for r in _load_records(path)]
    rows = scatter_rows(model, records)
    _write_csv(out, rows, ("id", "n", "target", "cnn", "noisy", "zne"))
    print(f"wrote {len(rows)} rows to {out}", file=sys.stderr)
    return EXIT_OK


def cmd_zne(args) -> int:
    from dataclasses import replace

    from .dataset import attach_zne

    out = _require_out(args)
    graph, base = _graph_and_noise(args)
    records = _load_records(args.data)
    estimator = _estimator(args) if args.estimator_override else None
    results = []
    for rec in records:
        done = rec
        if args.recompute or rec.zne is None:
            done = attach_zne(replace(rec, zne=None), _noise_at(base, rec.p_noise), graph, estimator)
        results.append({"id": rec.id, "n": rec.n, "m_z_exact": rec.m_z_exact, **done.zne})
    with open(out, "w", encoding="utf-8") as fh:
        json.dump(results, fh, indent=1)
    print(f"wrote {len(results)} ZNE estimates to {out}", file=sys.stderr)
    return EXIT_OK


# --- parser -----------------------------------------------------------------

def _add_estimator(p) -> None:
    p.add_argument("--estimator", choices=("trajectory", "shots"), default="trajectory")
    p.add_argument("--n-traj", type=int, default=512, help="trajectories per estimate")
    p.add_argument("--n-shots", type=int, default=4096, help="shots per estimate (shots estimator)")


def _add_training(p) -> None:
    p.add_argument("--train-config", help="JSON file with training hyperparameters")
    p.add_argument("--max-epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="master random seed (default 0)")
    common.add_argument("--threads", type=int, default=1, help="worker processes and BLAS threads")
    common.add_argument("--noise-config", help="JSON noise model overriding the defaults")
    common.add_argument("-o", "--out", help="output file")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="qsynergy", description="Noisy-circuit plus CNN experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[common], help="simulate a circuit corpus")
    p.add_argument("--config", default="A", help="A (angle per qubit) or B (angle per layer)")
    p.add_argument("--n", default="4..7", help="qubit counts, e.g. 6..10 or 4,6,8")
    p.add_argument("--layers", type=int, default=8)
    p.add_argument("--k", type=int, default=1000, help="number of circuits")
    p.add_argument("--zne", action="store_true", help="also store ZNE estimates")
    p.add_argument("--p-noise", type=float, default=1.0, help="CNOT noise strength in [0, 1]")
    _add_estimator(p)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", parents=[common], help="train a network")
    p.add_argument("--data", required=True)
    p.add_argument("--val", help="validation file (default: split off --val-fraction of --data)")
    p.add_argument("--val-fraction", type=float, default=0.1)
    p.add_argument("--inputs", choices=("hybrid", "classical"), default="hybrid")
    p.add_argument("--config", choices=("A", "B"), help="expected data configuration")
    p.add_argument("--history", help="history JSON path (default: next to the model)")
    _add_training(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="score models and baselines")
    p.add_argument("--model", action="append", help="model file (repeatable)")
    p.add_argument("--test", action="append", help="test file (repeatable)")
    p.add_argument("--zne", action="store_true", help="include the ZNE baseline")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", parents=[common], help="sweep p_noise or k_train")
    p.add_argument("--var", choices=("p_noise", "k_train"), required=True)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--config", choices=("A", "B"), default="A")
    p.add_argument("--n-train", default="4..7")
    p.add_argument("--n-test", default="10")
    p.add_argument("--layers", type=int, default=8)
    p.add_argument("--k-train", type=int, default=5000)
    p.add_argument("--k-val", type=int, default=500)
    p.add_argument("--k-test", type=int, default=500)
    p.add_argument("--seeds", help="training seeds, e.g. 0..2 (default: --seed)")
    p.add_argument("--inputs", choices=("hybrid", "classical", "both"), default="both")
    p.add_argument("--zne", action="store_true")
    p.add_argument("--cache-dir", help="reuse generated corpora stored here")
    _add_estimator(p)
    _add_training(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("scatter", parents=[common], help="per-circuit predictions")
    p.add_argument("--model", required=True)
    p.add_argument("--test", action="append", required=True)
    p.set_defaults(func=cmd_scatter)

    p = sub.add_parser("zne", parents=[common], help="per-circuit ZNE estimates")
    p.add_argument("--data", required=True)
    p.add_argument("--recompute", action="store_true", help="ignore ZNE values stored in the records")
    p.add_argument("--estimator-override", action="store_true",
                   help="use the estimator flags instead of each record's own settings")
    _add_estimator(p)
    p.set_defaults(func=cmd_zne)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, str(args.threads))
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")

    from numpy.linalg import LinAlgError

    from .cnn import ModelFileError
    from .dataset import SchemaError

    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, SchemaError, ModelFileError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (FloatingPointError, LinAlgError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
