"""Regression and correlation statistics used to score predictions."""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass

import numpy as np


def _pair(y, y_hat, min_len: int = 1) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=float).ravel()
    y_hat = np.asarray(y_hat, dtype=float).ravel()
    if y.shape != y_hat.shape:
        raise ValueError(f"length mismatch: {y.size} vs {y_hat.size}")
    if y.size < min_len:
        raise ValueError(f"need at least {min_len} values, got {y.size}")
    return y, y_hat


def mse(y, y_hat) -> float:
    y, y_hat = _pair(y, y_hat)
    return float(np.mean((y - y_hat) ** 2))


def r_squared(y, y_hat) -> float:
    """Coefficient of determination, 1 - SS_res / SS_tot."""
    y, y_hat = _pair(y, y_hat, 2)
    dev = y - y.mean()
    ss_tot = float(np.dot(dev, dev))
    if ss_tot == 0.0:
        raise ValueError("targets have zero variance; R^2 is undefined")
    res = y - y_hat
    return 1.0 - float(np.dot(res, res)) / ss_tot


def pearson(a, b) -> float:
    a, b = _pair(a, b, 2)
    da = a - a.mean()
    db = b - b.mean()
    saa, sbb = float(np.dot(da, da)), float(np.dot(db, db))
    if saa == 0.0 or sbb == 0.0:
        raise ValueError("Pearson correlation is undefined for a constant input")
    return float(np.dot(da, db)) / np.sqrt(saa * sbb)


@dataclass(frozen=True)
class EvalReport:
    r_squared: float
    one_minus_r2: float
    pearson: float
    mse: float
    k_test: int

    def to_dict(self) -> dict:
        return asdict(self)

    def csv_row(self) -> str:
        buf = io.StringIO()
        csv.writer(buf, lineterminator="\n").writerow(
            [repr(self.r_squared), repr(self.one_minus_r2), repr(self.pearson), repr(self.mse), self.k_test])
        return buf.getvalue()


def evaluate(y, y_hat) -> EvalReport:
    """All statistics at once; a constant predictor gets a NaN correlation."""
    r2 = r_squared(y, y_hat)
    try:
        rho = pearson(y, y_hat)
    except ValueError:
        rho = float("nan")
    return EvalReport(r2, 1.0 - r2, rho, mse(y, y_hat), int(np.size(y)))
