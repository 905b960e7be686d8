"""Zero-noise extrapolation: unitary folding plus Richardson extrapolation."""

from __future__ import annotations

from dataclasses import dataclass, replace
from fractions import Fraction

import numpy as np

from .circuits import Circuit
from .noise import NoiseModel
from .simulator import DEFAULT_N_TRAJ, ExpectationSet, run_trajectory, sample_shots

DEFAULT_SCALE_FACTORS = (1, 2, 3)


@dataclass(frozen=True)
class EstimatorSettings:
    """Which noisy estimator to run and with what budget."""

    kind: str = "trajectory"
    n_traj: int = DEFAULT_N_TRAJ
    n_shots: int = 4096

    def __post_init__(self):
        if self.kind not in ("trajectory", "shots"):
            raise ValueError(f"unknown estimator kind {self.kind!r}")
        if self.n_traj < 1 or self.n_shots < 1:
            raise ValueError("estimator budget must be positive")

    def run(self, circuit: Circuit, noise: NoiseModel, rng: np.random.Generator) -> ExpectationSet:
        if self.kind == "trajectory":
            return run_trajectory(circuit, noise, self.n_traj, rng)
        return sample_shots(circuit, noise, self.n_shots, rng)

    def meta(self) -> dict:
        if self.kind == "trajectory":
            return {"kind": "trajectory", "n_traj": self.n_traj}
        return {"kind": "shots", "n_shots": self.n_shots}

    @classmethod
    def from_meta(cls, meta: dict) -> EstimatorSettings:
        if meta["kind"] == "trajectory":
            return cls("trajectory", n_traj=int(meta["n_traj"]))
        return cls("shots", n_shots=int(meta["n_shots"]))


@dataclass(frozen=True)
class ZneEstimate:
    scale_factors: tuple[float, ...]
    values: tuple[float, ...]
    extrapolated: float

    def __post_init__(self):
        if len(self.values) != len(self.scale_factors):
            raise ValueError("one value per scale factor required")
        if any(b <= a for a, b in zip(self.scale_factors, self.scale_factors[1:])):
            raise ValueError("scale factors must be strictly increasing")
        if self.scale_factors and self.scale_factors[0] < 1:
            raise ValueError("scale factors must be >= 1")

    def to_json(self) -> dict:
        out = {str(lam): v for lam, v in zip(self.scale_factors, self.values)}
        out["extrapolated"] = self.extrapolated
        return out


def fold_circuit(circuit: Circuit, scale: int, rng: np.random.Generator | None = None) -> Circuit:
    """Replace gates G by G G^dagger G: all of them for scale 3, a random half for 2."""
    if not circuit.transpiled:
        raise ValueError("fold a transpiled circuit")
    if scale == 1:
        return circuit
    gates = circuit.gates
    if scale == 3:
        chosen = np.ones(len(gates), dtype=bool)
    elif scale == 2:
        if rng is None:
            raise ValueError("scale factor 2 needs a random stream")
        chosen = np.zeros(len(gates), dtype=bool)
        chosen[rng.choice(len(gates), size=len(gates) // 2, replace=False)] = True
    else:
        raise ValueError(f"unsupported scale factor {scale}; use 1, 2 or 3")
    out = []
    for g, fold in zip(gates, chosen):
        out += [g, g.inverse(), g] if fold else [g]
    return replace(circuit, gates=tuple(out), folded=True)


def richardson(scale_factors, values) -> float:
    """Value at zero of the Lagrange polynomial through (scale, value) pairs."""
    lams = [float(x) for x in scale_factors]
    vals = [float(v) for v in values]
    if len(lams) != len(vals):
        raise ValueError("scale factors and values differ in length")
    if len(lams) < 2:
        raise ValueError("need at least two points")
    if len(set(lams)) != len(lams):
        raise ValueError("duplicate scale factors")
    total = 0.0
    for i, (li, vi) in enumerate(zip(lams, vals)):
        # weights in exact rational arithmetic, so (1, 2, 3) gives exactly (3, -3, 1)
        w = Fraction(1)
        for j, lj in enumerate(lams):
            if j != i:
                w *= Fraction(lj) / (Fraction(lj) - Fraction(li))
        total += float(w) * vi
    return total


def zne_estimate(circuit: Circuit, noise: NoiseModel, settings: EstimatorSettings | None = None,
                 rng: np.random.Generator | None = None,
                 scale_factors=DEFAULT_SCALE_FACTORS) -> ZneEstimate:
    """Run the noisy estimator on each folded circuit and extrapolate m_z to zero noise."""
    settings = settings or EstimatorSettings()
    rng = np.random.default_rng() if rng is None else rng
    streams = rng.spawn(len(scale_factors))
    values = []
    for lam, stream in zip(scale_factors, streams):
        folded = fold_circuit(circuit, lam, stream)
        values.append(settings.run(folded, noise, stream).m_z)
    return ZneEstimate(tuple(scale_factors), tuple(values), richardson(scale_factors, values))
