"""Statevector, quantum-trajectory and density-matrix simulation of circuits.

Qubits of a circuit's section are mapped to tensor positions in ascending
physical order; position 0 is the most significant bit of an amplitude index.
All per-qubit outputs follow that order.

Trajectories are simulated as a batch. For channels whose branches are
unitary, the branch draw does not depend on the state, so every trajectory
keeps sharing the noiseless state until its first non-identity branch; only
those that have already deviated are stored and evolved individually.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import cos, sin

import numpy as np

from . import _kernels
from .circuits import Circuit
from .noise import ChannelSampler, NoiseModel, validate_cptp

MAX_EXACT_QUBITS = 20
MAX_DENSITY_QUBITS = 8
DEFAULT_N_TRAJ = 512


@dataclass(frozen=True)
class ExpectationSet:
    z: np.ndarray
    stderr: np.ndarray | None = None

    @property
    def m_z(self) -> float:
        return float(np.mean(self.z))

    @property
    def m_z_stderr(self) -> float | None:
        if self.stderr is None:
            return None
        return float(np.sqrt(np.sum(self.stderr ** 2)) / len(self.stderr))


@dataclass(frozen=True)
class _Op:
    kind: str
    pos: tuple[int, ...]
    params: tuple = ()
    sampler: ChannelSampler | None = None
    channel_pos: tuple[int, ...] = ()


def _compile(circuit: Circuit, noise: NoiseModel | None) -> list[_Op]:
    index = {q: i for i, q in enumerate(circuit.q)}
    checked: set[int] = set()
    program = []
    for g in circuit.gates:
        pos = tuple(index[q] for q in g.qubits)
        channel = None
        if noise is not None:
            if g.kind == "CNOT":
                channel = noise.cnot_channel(*g.qubits)
            elif g.kind in ("RX", "RZ"):
                channel = noise.gate_channel(g.kind, g.qubits[0])
        if channel is not None and id(channel) not in checked:
            if not validate_cptp(channel):
                raise ValueError(f"channel attached to {g} is not CPTP")
            checked.add(id(channel))
        if g.kind == "RX":
            params = (complex(cos(g.angle / 2)), complex(-1j * sin(g.angle / 2)))
        elif g.kind in ("RZ", "RZZ"):
            params = (complex(np.exp(-0.5j * g.angle)), complex(np.exp(0.5j * g.angle)))
        else:
            params = ()
        sampler = channel.sampling if channel is not None else None
        cpos = tuple(sorted(pos)) if channel is not None else ()
        program.append(_Op(g.kind, pos, params, sampler, cpos))
    return program


# --- batched kernels: psi has shape (batch, 2**n) ---------------------------

def _view1(psi: np.ndarray, n: int, p: int) -> np.ndarray:
    return psi.reshape(psi.shape[0], 1 << p, 2, 1 << (n - p - 1))


def _view2(psi: np.ndarray, n: int, a: int, b: int) -> np.ndarray:
    return psi.reshape(psi.shape[0], 1 << a, 2, 1 << (b - a - 1), 2, 1 << (n - b - 1))


def _apply_op(psi: np.ndarray, n: int, op: _Op) -> None:
    if psi.shape[0] == 0:
        return
    if op.kind == "RX":
        _kernels.rx(psi, n, op.pos[0], *op.params)
    elif op.kind == "RZ":
        _kernels.diag1(psi, n, op.pos[0], *op.params)
    elif op.kind == "CNOT":
        _kernels.cnot(psi, n, *op.pos)
    elif op.kind == "RZZ":
        _kernels.diag2(psi, n, *op.pos, *op.params)
    else:
        raise ValueError(f"cannot simulate gate kind {op.kind}")


def _apply_matrix(psi: np.ndarray, n: int, pos: tuple[int, ...], m: np.ndarray) -> np.ndarray:
    """Return m applied on ``pos`` (ascending) for every row of psi."""
    if len(pos) == 1:
        v = _view1(psi, n, pos[0])
        out = np.einsum("ij,bajc->baic", m, v)
    else:
        v = _view2(psi, n, *pos)
        out = np.einsum("ijkl,bakcld->baicjd", m.reshape(2, 2, 2, 2), v)
    return out.reshape(psi.shape)


def _z_matrix(n: int) -> np.ndarray:
    idx = np.arange(1 << n)
    bits = (idx[:, None] >> (n - 1 - np.arange(n))[None, :]) & 1
    return 1.0 - 2.0 * bits


def _readout_map(z: np.ndarray, circuit: Circuit, noise: NoiseModel | None) -> tuple[np.ndarray, np.ndarray]:
    if noise is None:
        return z, np.ones_like(z)
    p01 = np.array([noise.readout_for(q)[0] for q in circuit.q])
    p10 = np.array([noise.readout_for(q)[1] for q in circuit.q])
    scale = 1.0 - p01 - p10
    return scale * z + (p10 - p01), scale


# --- public simulators ------------------------------------------------------

def final_state(circuit: Circuit, max_qubits: int = MAX_EXACT_QUBITS) -> np.ndarray:
    """Noiseless output state starting from |0...0>."""
    n = circuit.n
    if n > max_qubits:
        raise ValueError(f"{n} qubits exceeds the statevector cap of {max_qubits}")
    psi = np.zeros((1, 1 << n), dtype=complex)
    psi[0, 0] = 1.0
    for op in _compile(circuit, None):
        _apply_op(psi, n, op)
    return psi[0]


def run_exact(circuit: Circuit, max_qubits: int = MAX_EXACT_QUBITS) -> ExpectationSet:
    psi = final_state(circuit, max_qubits)
    z = (np.abs(psi) ** 2) @ _z_matrix(circuit.n)
    return ExpectationSet(np.clip(z, -1.0, 1.0))


class _TrajectoryBatch:
    """Evolves ``n_traj`` trajectories sharing a noiseless reference state."""

    def __init__(self, circuit: Circuit, noise: NoiseModel, n_traj: int, rng: np.random.Generator):
        if n_traj < 1:
            raise ValueError("need at least one trajectory")
        if not circuit.transpiled:
            raise ValueError("noisy simulation requires a transpiled circuit")
        self.n = circuit.n
        self.n_traj = n_traj
        self.program = _compile(circuit, noise)
        self.rng = rng
        dim = 1 << self.n
        self.clean = np.zeros((1, dim), dtype=complex)
        self.clean[0, 0] = 1.0
        self.rows = np.empty((n_traj, dim), dtype=complex)
        self.row_of = np.full(n_traj, -1, dtype=np.int64)
        self.k = 0

    def _activate(self, traj: np.ndarray) -> None:
        new = traj[self.row_of[traj] < 0]
        if new.size:
            self.rows[self.k:self.k + new.size] = self.clean[0]
            self.row_of[new] = np.arange(self.k, self.k + new.size)
            self.k += new.size

    def run(self) -> _TrajectoryBatch:
        n, rng = self.n, self.rng
        everyone = np.arange(self.n_traj)
        for op in self.program:
            _apply_op(self.clean, n, op)
            _apply_op(self.rows[:self.k], n, op)
            s = op.sampler
            if s is None:
                continue
            branch = s.draw(rng.random(self.n_traj))
            kinds = np.asarray(s.kinds)[branch]
            if not s.state_independent:
                self._activate(everyone)
            hit = np.nonzero(kinds != 0)[0]
            if hit.size == 0:
                continue
            self._activate(hit)
            for b in np.unique(branch[hit]):
                rows = self.row_of[hit[branch[hit] == b]]
                if s.kinds[b] == 1 and s.factors[b] is not None:
                    psi = self.rows[rows]
                    for i, m in s.factors[b]:
                        _kernels.mat1(psi, n, op.channel_pos[i], *(complex(x) for x in m.ravel()))
                    self.rows[rows] = psi
                elif s.kinds[b] == 1:
                    self.rows[rows] = _apply_matrix(self.rows[rows], n, op.channel_pos, s.unitaries[b])
                else:
                    self._kraus_jump(rows, op.channel_pos, s.ops[b])
        return self

    def _kraus_jump(self, rows: np.ndarray, pos, ops) -> None:
        psi = self.rows[rows]
        outs = [_apply_matrix(psi, self.n, pos, k) for k in ops]
        weights = np.stack([np.sum(np.abs(o) ** 2, axis=1) for o in outs], axis=1)
        cum = np.cumsum(weights, axis=1)
        u = self.rng.random(len(rows)) * cum[:, -1]
        pick = np.minimum((cum <= u[:, None]).sum(axis=1), len(ops) - 1)
        chosen = np.stack(outs, axis=0)[pick, np.arange(len(rows))]
        norms = np.sqrt(weights[np.arange(len(rows)), pick])
        self.rows[rows] = chosen / norms[:, None]

    def per_trajectory_z(self) -> np.ndarray:
        zm = _z_matrix(self.n)
        z = np.empty((self.n_traj, self.n))
        z[:] = (np.abs(self.clean[0]) ** 2) @ zm
        active = self.row_of >= 0
        if active.any():
            z[active] = (np.abs(self.rows[self.row_of[active]]) ** 2) @ zm
        return z

    def probabilities(self) -> tuple[np.ndarray, np.ndarray]:
        """(clean probabilities, per-row probabilities for deviated trajectories)."""
        return np.abs(self.clean[0]) ** 2, np.abs(self.rows[:self.k]) ** 2


def run_trajectory(circuit: Circuit, noise: NoiseModel, n_traj: int = DEFAULT_N_TRAJ,
                   rng: np.random.Generator | None = None) -> ExpectationSet:
    """Average of exact per-trajectory <Z_n>, followed by the readout map."""
    rng = np.random.default_rng() if rng is None else rng
    z = _TrajectoryBatch(circuit, noise, n_traj, rng).run().per_trajectory_z()
    mean = z.mean(axis=0)
    err = z.std(axis=0, ddof=1) / np.sqrt(n_traj) if n_traj > 1 else np.zeros(circuit.n)
    mean, scale = _readout_map(mean, circuit, noise)
    return ExpectationSet(np.clip(mean, -1.0, 1.0), np.abs(scale) * err)


def sample_shots(circuit: Circuit, noise: NoiseModel, n_shots: int,
                 rng: np.random.Generator | None = None, chunk: int = 4096) -> ExpectationSet:
    """Finite-shot estimate: one trajectory and one measured bitstring per shot."""
    if n_shots < 1:
        raise ValueError("need at least one shot")
    rng = np.random.default_rng() if rng is None else rng
    n = circuit.n
    p01 = np.array([noise.readout_for(q)[0] for q in circuit.q])
    p10 = np.array([noise.readout_for(q)[1] for q in circuit.q])
    shifts = n - 1 - np.arange(n)
    total = np.zeros(n)
    total_sq = np.zeros(n)
    done = 0
    while done < n_shots:
        size = min(chunk, n_shots - done)
        batch = _TrajectoryBatch(circuit, noise, size, rng).run()
        clean_p, row_p = batch.probabilities()
        u = rng.random(size)
        outcome = np.empty(size, dtype=np.int64)
        inactive = batch.row_of < 0
        cdf = np.cumsum(clean_p)
        outcome[inactive] = np.searchsorted(cdf / cdf[-1], u[inactive], side="right")
        if batch.k:
            cdf_rows = np.cumsum(row_p, axis=1)
            cdf_rows /= cdf_rows[:, -1:]
            rows = batch.row_of[~inactive]
            outcome[~inactive] = (cdf_rows[rows] <= u[~inactive, None]).sum(axis=1)
        outcome = np.minimum(outcome, (1 << n) - 1)
        bits = (outcome[:, None] >> shifts[None, :]) & 1
        flip = rng.random((size, n))
        bits = np.where(bits == 0, (flip < p01).astype(np.int64), 1 - (flip < p10).astype(np.int64))
        z = 1.0 - 2.0 * bits
        total += z.sum(axis=0)
        total_sq += (z ** 2).sum(axis=0)
        done += size
    mean = total / n_shots
    var = np.maximum(total_sq / n_shots - mean ** 2, 0.0)
    return ExpectationSet(mean, np.sqrt(var / n_shots))


# --- density-matrix oracle --------------------------------------------------

def _apply_on_axes(t: np.ndarray, m: np.ndarray, axes: list[int]) -> np.ndarray:
    k = len(axes)
    mt = m.reshape((2,) * (2 * k))
    out = np.tensordot(mt, t, axes=(list(range(k, 2 * k)), axes))
    return np.moveaxis(out, list(range(k)), axes)


def density_matrix(circuit: Circuit, noise: NoiseModel | None,
                   max_qubits: int = MAX_DENSITY_QUBITS) -> np.ndarray:
    """Final density matrix (before readout), evolved gate by gate as
    rho -> U rho U^dagger followed by rho -> sum_k K rho K^dagger."""
    n = circuit.n
    if n > max_qubits:
        raise ValueError(f"density simulation is limited to {max_qubits} qubits")
    index = {q: i for i, q in enumerate(circuit.q)}
    rho = np.zeros((2,) * (2 * n), dtype=complex)
    rho[(0,) * (2 * n)] = 1.0

    def sandwich(r, m, pos):
        r = _apply_on_axes(r, m, pos)
        return _apply_on_axes(r, m.conj(), [n + p for p in pos])

    for g in circuit.gates:
        pos = [index[q] for q in g.qubits]
        rho = sandwich(rho, g.matrix(), pos)
        channel = None
        if noise is not None:
            if g.kind == "CNOT":
                channel = noise.cnot_channel(*g.qubits)
            elif g.kind in ("RX", "RZ"):
                channel = noise.gate_channel(g.kind, g.qubits[0])
        if channel is None:
            continue
        if not validate_cptp(channel):
            raise ValueError(f"channel attached to {g} is not CPTP")
        cpos = sorted(pos)
        rho = sum(sandwich(rho, k, cpos) for k in channel.kraus_ops())
    return rho.reshape(1 << n, 1 << n)


def run_density(circuit: Circuit, noise: NoiseModel | None,
                max_qubits: int = MAX_DENSITY_QUBITS) -> ExpectationSet:
    rho = density_matrix(circuit, noise, max_qubits)
    z = np.real(np.diagonal(rho)) @ _z_matrix(circuit.n)
    z, _ = _readout_map(z, circuit, noise)
    return ExpectationSet(np.clip(z, -1.0, 1.0))
