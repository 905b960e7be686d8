"""In-place gate kernels on batches of statevectors of shape (batch, 2**n).

Position ``p`` refers to bit ``n - 1 - p`` of the amplitude index.
"""

import numba
import numpy as np


@numba.njit(cache=True, inline="always")
def _insert_zero(i, bit):
    low = i & ((1 << bit) - 1)
    return ((i >> bit) << (bit + 1)) | low


@numba.njit(cache=True)
def rx(psi, n, p, c, s):
    batch, dim = psi.shape
    bit = n - 1 - p
    step = 1 << bit
    for r in range(batch):
        row = psi[r]
        for j in range(dim >> 1):
            i0 = _insert_zero(j, bit)
            i1 = i0 | step
            a0 = row[i0]
            a1 = row[i1]
            row[i0] = c * a0 + s * a1
            row[i1] = s * a0 + c * a1


@numba.njit(cache=True)
def mat1(psi, n, p, m00, m01, m10, m11):
    batch, dim = psi.shape
    bit = n - 1 - p
    step = 1 << bit
    for r in range(batch):
        row = psi[r]
        for j in range(dim >> 1):
            i0 = _insert_zero(j, bit)
            i1 = i0 | step
            a0 = row[i0]
            a1 = row[i1]
            row[i0] = m00 * a0 + m01 * a1
            row[i1] = m10 * a0 + m11 * a1


@numba.njit(cache=True)
def diag1(psi, n, p, d0, d1):
    batch, dim = psi.shape
    bit = n - 1 - p
    step = 1 << bit
    for r in range(batch):
        row = psi[r]
        for j in range(dim >> 1):
            i0 = _insert_zero(j, bit)
            row[i0] *= d0
            row[i0 | step] *= d1


@numba.njit(cache=True)
def cnot(psi, n, control, target):
    batch, dim = psi.shape
    cb = n - 1 - control
    tb = n - 1 - target
    lo, hi = min(cb, tb), max(cb, tb)
    cm, tm = 1 << cb, 1 << tb
    for r in range(batch):
        row = psi[r]
        for j in range(dim >> 2):
            i = _insert_zero(_insert_zero(j, lo), hi) | cm
            k = i | tm
            tmp = row[i]
            row[i] = row[k]
            row[k] = tmp


@numba.njit(cache=True)
def diag2(psi, n, a, b, d_even, d_odd):
    """Diagonal two-qubit phase: ``d_even`` on equal bits, ``d_odd`` otherwise."""
    batch, dim = psi.shape
    ab = n - 1 - a
    bb = n - 1 - b
    for r in range(batch):
        row = psi[r]
        for i in range(dim):
            if ((i >> ab) & 1) == ((i >> bb) & 1):
                row[i] *= d_even
            else:
                row[i] *= d_odd


def warmup() -> None:
    psi = np.zeros((1, 4), dtype=np.complex128)
    psi[0, 0] = 1.0
    rx(psi, 2, 0, 1.0 + 0j, 0j)
    mat1(psi, 2, 0, 1.0 + 0j, 0j, 0j, 1.0 + 0j)
    diag1(psi, 2, 0, 1.0 + 0j, 1.0 + 0j)
    cnot(psi, 2, 0, 1)
    diag2(psi, 2, 0, 1, 1.0 + 0j, 1.0 + 0j)
