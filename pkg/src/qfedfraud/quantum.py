"""Dense simulation of small qubit registers.

Pure states are stored as complex amplitude arrays of length ``2**n`` and
mixed states as ``2**n x 2**n`` density matrices. Qubit 0 is the most
significant bit of the amplitude index, so for two qubits the basis order is
``|00>, |01>, |10>, |11>`` with the left digit belonging to qubit 0.

Gates are applied by updating amplitude pairs (or quadruples for two-qubit
gates) in place of a full ``2**n``-dimensional matrix product. Every array
may carry leading batch axes; each batch entry is an independent register.
Single-qubit gate matrices may be batched as well (shape ``(..., 2, 2)``),
which is how per-sample rotation angles are simulated in one pass.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Union

import numpy as np

ATOL = 1e-10

_I2 = np.eye(2, dtype=complex)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
CNOT_MATRIX = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
)


class QubitIndexError(IndexError):
    """A gate, channel or observable referenced a qubit outside the register."""

    def __init__(self, qubit: int, n_qubits: int):
        self.qubit = qubit
        self.n_qubits = n_qubits
        super().__init__(
            f"qubit index {qubit} out of range for a {n_qubits}-qubit register"
        )


class ChannelError(ValueError):
    """Kraus operators do not form a trace-preserving channel."""


# --------------------------------------------------------------------------
# Raw kernels (no validation; used by the hot paths)
# --------------------------------------------------------------------------


def _apply_1q(psi: np.ndarray, u: np.ndarray, q: int, n: int) -> np.ndarray:
    """Apply ``u`` (shape ``(..., 2, 2)``) to qubit ``q`` of ``psi`` (``(..., 2**n)``)."""
    batch = psi.shape[:-1]
    view = psi.reshape(batch + (1 << q, 2, 1 << (n - q - 1)))
    a0 = view[..., 0, :]
    a1 = view[..., 1, :]
    u = np.asarray(u)
    u00 = u[..., 0, 0, None, None]
    u01 = u[..., 0, 1, None, None]
    u10 = u[..., 1, 0, None, None]
    u11 = u[..., 1, 1, None, None]
    out = np.empty(np.broadcast_shapes(view.shape, u00.shape[:-2] + (1, 1, 1)), dtype=complex)
    out[..., 0, :] = u00 * a0 + u01 * a1
    out[..., 1, :] = u10 * a0 + u11 * a1
    return out.reshape(out.shape[:-3] + (1 << n,))


@lru_cache(maxsize=None)
def _cnot_permutation(control: int, target: int, n: int) -> np.ndarray:
    idx = np.arange(1 << n)
    cbit = 1 << (n - 1 - control)
    tbit = 1 << (n - 1 - target)
    return np.where(idx & cbit, idx ^ tbit, idx)


def _apply_2q(psi: np.ndarray, m: np.ndarray, control: int, target: int, n: int) -> np.ndarray:
    """Apply a 4x4 matrix to (control, target); control is the high bit of the 4x4 basis."""
    batch = psi.shape[:-1]
    nb = len(batch)
    t = psi.reshape(batch + (2,) * n)
    t = np.moveaxis(t, (nb + control, nb + target), (-2, -1))
    moved_shape = t.shape
    t = t.reshape(moved_shape[:-2] + (4,)) @ np.asarray(m).T
    t = np.moveaxis(t.reshape(moved_shape), (-2, -1), (nb + control, nb + target))
    return np.ascontiguousarray(t).reshape(batch + (1 << n,))


def _apply_cnot(psi: np.ndarray, control: int, target: int, n: int) -> np.ndarray:
    return psi[..., _cnot_permutation(control, target, n)]


def _dm_apply_1q(rho: np.ndarray, u: np.ndarray, q: int, n: int) -> np.ndarray:
    """``u rho u^dagger`` for a (possibly non-unitary) single-qubit operator."""
    u = np.asarray(u)
    ub = u[..., None, :, :]
    rows = _apply_1q(np.swapaxes(rho, -1, -2), ub, q, n)
    return _apply_1q(np.swapaxes(rows, -1, -2), ub.conj(), q, n)


def _dm_apply_2q(rho: np.ndarray, m: np.ndarray, control: int, target: int, n: int) -> np.ndarray:
    rows = _apply_2q(np.swapaxes(rho, -1, -2), m, control, target, n)
    return _apply_2q(np.swapaxes(rows, -1, -2), np.conj(m), control, target, n)


def _dm_apply_cnot(rho: np.ndarray, control: int, target: int, n: int) -> np.ndarray:
    perm = _cnot_permutation(control, target, n)
    return rho[..., perm, :][..., :, perm]


def _dm_apply_kraus(rho: np.ndarray, ops: tuple[np.ndarray, ...], q: int, n: int) -> np.ndarray:
    out = _dm_apply_1q(rho, ops[0], q, n)
    for k in ops[1:]:
        out = out + _dm_apply_1q(rho, k, q, n)
    return out


def _z_signs(q: int, n: int) -> np.ndarray:
    idx = np.arange(1 << n)
    return np.where(idx & (1 << (n - 1 - q)), -1.0, 1.0)


def _expect_z_sv(psi: np.ndarray, q: int, n: int) -> np.ndarray:
    probs = psi.real**2 + psi.imag**2
    return probs @ _z_signs(q, n)


def _expect_z_dm(rho: np.ndarray, q: int, n: int) -> np.ndarray:
    diag = np.diagonal(rho, axis1=-2, axis2=-1).real
    return diag @ _z_signs(q, n)


# --------------------------------------------------------------------------
# States
# --------------------------------------------------------------------------


def _check_qubit(q: int, n: int) -> None:
    if not 0 <= q < n:
        raise QubitIndexError(q, n)


@dataclass(frozen=True)
class StateVector:
    """Pure state of ``n_qubits`` qubits; ``amps`` has shape ``(..., 2**n_qubits)``."""

    n_qubits: int
    amps: np.ndarray

    def __post_init__(self):
        if self.n_qubits < 1:
            raise ValueError(f"n_qubits must be positive, got {self.n_qubits}")
        amps = np.asarray(self.amps, dtype=complex)
        if amps.ndim == 0 or amps.shape[-1] != 1 << self.n_qubits:
            raise ValueError(
                f"expected {1 << self.n_qubits} amplitudes for {self.n_qubits} qubits, "
                f"got shape {amps.shape}"
            )
        if not np.all(np.isfinite(amps)):
            raise ValueError("state amplitudes must be finite")
        norms = np.sum(np.abs(amps) ** 2, axis=-1)
        if np.max(np.abs(norms - 1.0)) > ATOL:
            raise ValueError(f"state is not normalized (squared norm {norms})")
        object.__setattr__(self, "amps", amps)

    @classmethod
    def zero(cls, n_qubits: int) -> "StateVector":
        amps = np.zeros(1 << n_qubits, dtype=complex)
        amps[0] = 1.0
        return cls(n_qubits, amps)

    @classmethod
    def basis(cls, n_qubits: int, bits: str | int) -> "StateVector":
        """Computational basis state; ``bits`` is a bitstring with qubit 0 first, or an index."""
        index = int(bits, 2) if isinstance(bits, str) else int(bits)
        amps = np.zeros(1 << n_qubits, dtype=complex)
        amps[index] = 1.0
        return cls(n_qubits, amps)

    def norm(self) -> np.ndarray | float:
        return np.sqrt(np.sum(np.abs(self.amps) ** 2, axis=-1))


@dataclass(frozen=True)
class DensityMatrix:
    """Mixed state of ``n_qubits`` qubits; ``elems`` has shape ``(..., 2**n, 2**n)``.

    Hermiticity and unit trace are checked on construction. Positivity is
    not, since it needs an eigendecomposition; tests check it separately.
    """

    n_qubits: int
    elems: np.ndarray

    def __post_init__(self):
        if self.n_qubits < 1:
            raise ValueError(f"n_qubits must be positive, got {self.n_qubits}")
        elems = np.asarray(self.elems, dtype=complex)
        d = 1 << self.n_qubits
        if elems.ndim < 2 or elems.shape[-2:] != (d, d):
            raise ValueError(f"expected a {d}x{d} matrix, got shape {elems.shape}")
        if not np.all(np.isfinite(elems)):
            raise ValueError("density matrix entries must be finite")
        if np.max(np.abs(elems - np.conj(np.swapaxes(elems, -1, -2)))) > ATOL:
            raise ValueError("density matrix is not Hermitian")
        tr = np.trace(elems, axis1=-2, axis2=-1)
        if np.max(np.abs(tr - 1.0)) > ATOL:
            raise ValueError(f"density matrix trace is {tr}, expected 1")
        object.__setattr__(self, "elems", elems)

    @classmethod
    def maximally_mixed(cls, n_qubits: int) -> "DensityMatrix":
        d = 1 << n_qubits
        return cls(n_qubits, np.eye(d, dtype=complex) / d)

    def trace(self):
        return np.trace(self.elems, axis1=-2, axis2=-1)


# --------------------------------------------------------------------------
# Gates
# --------------------------------------------------------------------------


def _check_unitary(m: np.ndarray) -> None:
    eye = np.eye(m.shape[-1])
    prod = np.conj(np.swapaxes(m, -1, -2)) @ m
    if np.max(np.abs(prod - eye)) > ATOL:
        raise ValueError("gate matrix is not unitary")


@dataclass(frozen=True)
class Gate1Q:
    matrix: np.ndarray
    target: int

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape[-2:] != (2, 2):
            raise ValueError(f"single-qubit gate needs a 2x2 matrix, got {m.shape}")
        _check_unitary(m)
        object.__setattr__(self, "matrix", m)


@dataclass(frozen=True)
class Gate2Q:
    matrix: np.ndarray
    control: int
    target: int

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (4, 4):
            raise ValueError(f"two-qubit gate needs a 4x4 matrix, got {m.shape}")
        if self.control == self.target:
            raise ValueError("control and target must differ")
        _check_unitary(m)
        object.__setattr__(self, "matrix", m)


Gate = Union[Gate1Q, Gate2Q]


def ry_matrix(theta) -> np.ndarray:
    """``exp(-i theta Y / 2)``; ``theta`` may be an array, giving shape ``(..., 2, 2)``."""
    theta = np.asarray(theta, dtype=float)
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    out = np.empty(theta.shape + (2, 2), dtype=complex)
    out[..., 0, 0] = c
    out[..., 0, 1] = -s
    out[..., 1, 0] = s
    out[..., 1, 1] = c
    return out


def rz_matrix(phi) -> np.ndarray:
    """``exp(-i phi Z / 2)``."""
    phi = np.asarray(phi, dtype=float)
    a = np.exp(-0.5j * phi)
    out = np.zeros(phi.shape + (2, 2), dtype=complex)
    out[..., 0, 0] = a
    out[..., 1, 1] = np.conj(a)
    return out


def rx_matrix(theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    c, s = np.cos(theta / 2), -1j * np.sin(theta / 2)
    out = np.empty(theta.shape + (2, 2), dtype=complex)
    out[..., 0, 0] = c
    out[..., 0, 1] = s
    out[..., 1, 0] = s
    out[..., 1, 1] = c
    return out


def ry_then_rz(theta: float, phi: float) -> np.ndarray:
    """``R_z(phi) R_y(theta)`` for scalar angles (``R_y`` acts first)."""
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    a = complex(math.cos(phi / 2), -math.sin(phi / 2))
    b = a.conjugate()
    return np.array([[a * c, -a * s], [b * s, b * c]])


def ry(theta, target: int) -> Gate1Q:
    return Gate1Q(ry_matrix(theta), target)


def rz(phi, target: int) -> Gate1Q:
    return Gate1Q(rz_matrix(phi), target)


def rx(theta, target: int) -> Gate1Q:
    return Gate1Q(rx_matrix(theta), target)


def x_gate(target: int) -> Gate1Q:
    return Gate1Q(PAULI_X, target)


def y_gate(target: int) -> Gate1Q:
    return Gate1Q(PAULI_Y, target)


def z_gate(target: int) -> Gate1Q:
    return Gate1Q(PAULI_Z, target)


def h_gate(target: int) -> Gate1Q:
    return Gate1Q(HADAMARD, target)


def identity_gate(target: int) -> Gate1Q:
    return Gate1Q(_I2, target)


def cnot(control: int, target: int) -> Gate2Q:
    return Gate2Q(CNOT_MATRIX, control, target)


def _gate_qubits(gate: Gate) -> tuple[int, ...]:
    if isinstance(gate, Gate2Q):
        return (gate.control, gate.target)
    return (gate.target,)


def _is_cnot(gate: Gate2Q) -> bool:
    return gate.matrix is CNOT_MATRIX or np.array_equal(gate.matrix, CNOT_MATRIX)


def apply_gate_sv(state: StateVector, gate: Gate) -> StateVector:
    """Return ``U|psi>``."""
    n = state.n_qubits
    for q in _gate_qubits(gate):
        _check_qubit(q, n)
    if isinstance(gate, Gate2Q):
        if _is_cnot(gate):
            amps = _apply_cnot(state.amps, gate.control, gate.target, n)
        else:
            amps = _apply_2q(state.amps, gate.matrix, gate.control, gate.target, n)
    else:
        amps = _apply_1q(state.amps, gate.matrix, gate.target, n)
    return StateVector(n, amps)


def apply_gate_dm(rho: DensityMatrix, gate: Gate) -> DensityMatrix:
    """Return ``U rho U^dagger``."""
    n = rho.n_qubits
    for q in _gate_qubits(gate):
        _check_qubit(q, n)
    if isinstance(gate, Gate2Q):
        if _is_cnot(gate):
            elems = _dm_apply_cnot(rho.elems, gate.control, gate.target, n)
        else:
            elems = _dm_apply_2q(rho.elems, gate.matrix, gate.control, gate.target, n)
    else:
        elems = _dm_apply_1q(rho.elems, gate.matrix, gate.target, n)
    return DensityMatrix(n, elems)


def expectation_z(state: StateVector | DensityMatrix, qubit: int):
    """``<Z_qubit>``; a float for a single register, an array for a batch."""
    _check_qubit(qubit, state.n_qubits)
    if isinstance(state, DensityMatrix):
        val = _expect_z_dm(state.elems, qubit, state.n_qubits)
    else:
        val = _expect_z_sv(state.amps, qubit, state.n_qubits)
    return float(val) if np.ndim(val) == 0 else val


def sv_to_dm(state: StateVector) -> DensityMatrix:
    """``|psi><psi|``."""
    a = state.amps
    return DensityMatrix(state.n_qubits, a[..., :, None] * np.conj(a[..., None, :]))


# --------------------------------------------------------------------------
# Noise channels
# --------------------------------------------------------------------------


class NoiseKind(str, enum.Enum):
    DEPOLARIZING = "depolarizing"
    PHASE_DAMPING = "phase_damping"
    AMPLITUDE_DAMPING = "amplitude_damping"
    BIT_FLIP = "bit_flip"
    PHASE_FLIP = "phase_flip"
    BIT_PHASE_FLIP = "bit_phase_flip"


def kraus_operators(kind: NoiseKind | str, p: float) -> list[np.ndarray]:
    """Textbook single-qubit Kraus sets parameterized by strength ``p`` in [0, 1]."""
    kind = NoiseKind(kind)
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"noise strength must lie in [0, 1], got {p}")
    if kind is NoiseKind.BIT_FLIP:
        return [np.sqrt(1 - p) * _I2, np.sqrt(p) * PAULI_X]
    if kind is NoiseKind.PHASE_FLIP:
        return [np.sqrt(1 - p) * _I2, np.sqrt(p) * PAULI_Z]
    if kind is NoiseKind.BIT_PHASE_FLIP:
        return [np.sqrt(1 - p) * _I2, np.sqrt(p) * PAULI_Y]
    if kind is NoiseKind.DEPOLARIZING:
        a = np.sqrt(p / 4)
        return [np.sqrt(1 - 3 * p / 4) * _I2, a * PAULI_X, a * PAULI_Y, a * PAULI_Z]
    if kind is NoiseKind.AMPLITUDE_DAMPING:
        return [
            np.array([[1, 0], [0, np.sqrt(1 - p)]], dtype=complex),
            np.array([[0, np.sqrt(p)], [0, 0]], dtype=complex),
        ]
    # phase damping
    return [
        np.array([[1, 0], [0, np.sqrt(1 - p)]], dtype=complex),
        np.array([[0, 0], [0, np.sqrt(p)]], dtype=complex),
    ]


def completeness_error(operators) -> float:
    """Max elementwise deviation of ``sum K^dagger K`` from the identity."""
    total = sum(np.conj(k).T @ k for k in operators)
    return float(np.max(np.abs(total - np.eye(total.shape[0]))))


@dataclass(frozen=True)
class KrausChannel:
    """Single-qubit noise channel. Construction fails unless ``sum K^dagger K = I``."""

    kind: NoiseKind
    p: float
    operators: tuple[np.ndarray, ...]

    def __post_init__(self):
        ops = tuple(np.asarray(k, dtype=complex) for k in self.operators)
        if not ops or any(k.shape != (2, 2) for k in ops):
            raise ChannelError(f"{self.kind}: Kraus operators must be 2x2 matrices")
        err = completeness_error(ops)
        if err > ATOL:
            raise ChannelError(
                f"{NoiseKind(self.kind).value} channel at p={self.p} is not trace preserving "
                f"(completeness error {err:.3e})"
            )
        object.__setattr__(self, "operators", ops)
        object.__setattr__(self, "kind", NoiseKind(self.kind))

    @classmethod
    def make(cls, kind: NoiseKind | str, p: float) -> "KrausChannel":
        return cls(NoiseKind(kind), float(p), tuple(kraus_operators(kind, p)))


def apply_channel(rho: DensityMatrix, ch: KrausChannel, target: int) -> DensityMatrix:
    """Return ``sum_m K_m rho K_m^dagger`` acting on qubit ``target``."""
    _check_qubit(target, rho.n_qubits)
    return DensityMatrix(
        rho.n_qubits, _dm_apply_kraus(rho.elems, ch.operators, target, rho.n_qubits)
    )
