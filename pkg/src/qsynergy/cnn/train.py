"""Mini-batch Adam training on the mean squared error with early stopping."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from ..dataset import CircuitRecord
from .model import CnnModel, build_input, group_by_shape, predict_inputs

log = logging.getLogger(__name__)


class TrainingDiverged(FloatingPointError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"training loss became {loss} at epoch {epoch}")
        self.epoch = epoch
        self.loss = loss


@dataclass
class TrainConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 256
    max_epochs: int = 200
    patience: int = 10

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, data: dict) -> TrainConfig:
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown training options: {sorted(unknown)}")
        return cls(**data)


@dataclass
class AdamState:
    lr: float
    beta1: float
    beta2: float
    eps: float
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_model(cls, model: CnnModel, cfg: TrainConfig) -> AdamState:
        zeros = {k: np.zeros_like(p) for k, p in model.params.items()}
        return cls(cfg.lr, cfg.beta1, cfg.beta2, cfg.eps, 0, zeros, {k: z.copy() for k, z in zeros.items()})

    def update(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        """One Adam step, modifying ``params`` in place."""
        self.step += 1
        c1 = 1.0 - self.beta1 ** self.step
        c2 = 1.0 - self.beta2 ** self.step
        for name, g in grads.items():
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            params[name] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass
class TrainResult:
    model: CnnModel
    history: list[dict]
    best_epoch: int


def _bucket(inputs: list[np.ndarray], targets: np.ndarray):
    return [(np.stack([inputs[i] for i in idx]), targets[idx]) for idx in group_by_shape(inputs).values()]


def train(model: CnnModel, train_records: list[CircuitRecord], val_records: list[CircuitRecord],
          cfg: TrainConfig | None = None, rng: np.random.Generator | None = None,
          with_noisy: bool | None = None) -> TrainResult:
    """Fit ``model`` in place; returns it restored to the best-validation weights.

    Batches never mix input shapes (records are bucketed by N and P). Without
    validation records the training loss drives checkpointing.
    """
    cfg = cfg or TrainConfig()
    rng = np.random.default_rng() if rng is None else rng
    if not train_records:
        raise ValueError("training set is empty")
    if with_noisy is None:
        with_noisy = model.in_channels == 3
    x_train = [build_input(r, with_noisy) for r in train_records]
    y_train = np.array([r.m_z_exact for r in train_records])
    buckets = _bucket(x_train, y_train)
    x_val = [build_input(r, with_noisy) for r in val_records]
    y_val = np.array([r.m_z_exact for r in val_records])

    adam = AdamState.for_model(model, cfg)
    best = {k: v.copy() for k, v in model.params.items()}
    best_loss, best_epoch, history = np.inf, 0, []

    for epoch in range(1, cfg.max_epochs + 1):
        batches = []
        for b, (xb, yb) in enumerate(buckets):
            order = rng.permutation(len(yb))
            batches += [(b, order[k:k + cfg.batch_size]) for k in range(0, len(yb), cfg.batch_size)]
        total = 0.0
        for j in rng.permutation(len(batches)):
            b, idx = batches[j]
            xb, yb = buckets[b][0][idx], buckets[b][1][idx]
            with np.errstate(over="ignore", invalid="ignore"):  # divergence is checked just below
                resid = model.forward_batch(xb) - yb
            loss = float(np.mean(resid ** 2))
            if not np.isfinite(loss):
                raise TrainingDiverged(epoch, loss)
            total += loss * len(idx)
            adam.update(model.params, model.backward_batch(2.0 * resid / len(idx)))
        train_mse = total / len(y_train)
        if x_val:
            with np.errstate(over="ignore", invalid="ignore"):
                val_mse = float(np.mean((predict_inputs(model, x_val) - y_val) ** 2))
            if not np.isfinite(val_mse):
                raise TrainingDiverged(epoch, val_mse)
        else:
            val_mse = train_mse
        if val_mse < best_loss:
            best_loss, best_epoch = val_mse, epoch
            best = {k: v.copy() for k, v in model.params.items()}
        history.append({"epoch": epoch, "train_mse": train_mse, "val_mse": val_mse, "best_val_mse": best_loss})
        log.debug("epoch %d train %.3e val %.3e", epoch, train_mse, val_mse)
        if epoch - best_epoch >= cfg.patience:
            break

    for k, v in best.items():
        np.copyto(model.params[k], v)
    model.release()
    return TrainResult(model, history, best_epoch)
