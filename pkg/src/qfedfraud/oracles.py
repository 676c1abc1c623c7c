"""Brute-force reference computations.

Everything here is deliberately naive: full Kronecker-product operators,
explicit Python loops and finite differences. These routines share no code
with the fast kernels in :mod:`qfedfraud.quantum` or the gradient in
:mod:`qfedfraud.training`, and exist only to check them.
"""

from __future__ import annotations

from functools import reduce

import numpy as np

_I = np.eye(2, dtype=complex)


def embed_1q(u: np.ndarray, target: int, n: int) -> np.ndarray:
    """Full ``2**n x 2**n`` operator for ``u`` on ``target`` (qubit 0 leftmost)."""
    factors = [u if q == target else _I for q in range(n)]
    return reduce(np.kron, factors)


def embed_2q(m: np.ndarray, control: int, target: int, n: int) -> np.ndarray:
    """Full operator for a 4x4 ``m`` on (control, target), built entry by entry."""
    d = 1 << n
    full = np.zeros((d, d), dtype=complex)
    for col in range(d):
        cbit = (col >> (n - 1 - control)) & 1
        tbit = (col >> (n - 1 - target)) & 1
        sub_in = 2 * cbit + tbit
        for sub_out in range(4):
            amp = m[sub_out, sub_in]
            if amp == 0:
                continue
            row = col
            row &= ~(1 << (n - 1 - control))
            row &= ~(1 << (n - 1 - target))
            row |= (sub_out >> 1) << (n - 1 - control)
            row |= (sub_out & 1) << (n - 1 - target)
            full[row, col] += amp
    return full


def z_observable(qubit: int, n: int) -> np.ndarray:
    return embed_1q(np.diag([1.0, -1.0]).astype(complex), qubit, n)


def oracle_ry(theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def oracle_rz(phi: float) -> np.ndarray:
    return np.diag([np.exp(-0.5j * phi), np.exp(0.5j * phi)])


def oracle_cnot() -> np.ndarray:
    m = np.eye(4, dtype=complex)
    m[2:, 2:] = [[0, 1], [1, 0]]
    return m


def classifier_unitary(n: int, n_layers: int, params, x) -> np.ndarray:
    """Full circuit unitary of the classifier, multiplied out gate by gate."""
    d = 1 << n
    total = np.eye(d, dtype=complex)

    def chain():
        out = np.eye(d, dtype=complex)
        for k in range(n - 1):
            out = embed_2q(oracle_cnot(), k, k + 1, n) @ out
        return out

    for j in range(n):
        total = embed_1q(oracle_ry(x[2 * j]), j, n) @ total
        total = embed_1q(oracle_rz(x[2 * j + 1]), j, n) @ total
    total = chain() @ total
    for layer in range(n_layers):
        for q in range(n):
            base = 2 * (layer * n + q)
            total = embed_1q(oracle_ry(params[base]), q, n) @ total
            total = embed_1q(oracle_rz(params[base + 1]), q, n) @ total
        total = chain() @ total
    return total


def classifier_output(n: int, n_layers: int, params, x) -> float:
    """Noiseless fraud probability ``(1 + <Z_0>) / 2`` via the full unitary."""
    psi0 = np.zeros(1 << n, dtype=complex)
    psi0[0] = 1.0
    psi = classifier_unitary(n, n_layers, params, x) @ psi0
    ez = np.real(np.conj(psi) @ z_observable(0, n) @ psi)
    return (1.0 + ez) / 2.0


def naive_mse(predictions, labels) -> float:
    total = 0.0
    for p, y in zip(predictions, labels):
        total += (y - p) ** 2
    return total / len(labels)


def central_difference(f, params, step: float = 1e-5) -> np.ndarray:
    """Central finite-difference gradient of scalar ``f`` at ``params``."""
    params = np.asarray(params, dtype=float)
    grad = np.zeros_like(params)
    for i in range(params.size):
        up = params.copy()
        dn = params.copy()
        up[i] += step
        dn[i] -= step
        grad[i] = (f(up) - f(dn)) / (2 * step)
    return grad


def random_state(n: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
    return v / np.linalg.norm(v)


def random_density_matrix(n: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    d = 1 << n
    rank = rank or d
    a = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    rho = a @ np.conj(a).T
    return rho / np.trace(rho)


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))
