"""Angle-encoded variational classifier.

Each qubit ``j`` receives two features as rotation angles, ``R_y(x[2j])``
followed by ``R_z(x[2j+1])``, after which a CNOT chain entangles neighbours.
``n_layers`` trainable layers follow, each a per-qubit ``R_y``/``R_z`` pair
and the same CNOT chain. The fraud probability is ``(1 + <Z_0>) / 2``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

from . import quantum as qc


class NoisePlacement(str, enum.Enum):
    AFTER_EACH_LAYER = "after_each_layer"
    AFTER_FULL_CIRCUIT = "after_full_circuit"


class FeatureLengthError(ValueError):
    def __init__(self, expected: int, actual: int):
        self.expected = expected
        self.actual = actual
        super().__init__(f"expected {expected} features, got {actual}")


class ParameterError(ValueError):
    pass


@dataclass(frozen=True)
class CircuitSpec:
    n_qubits: int = 4
    n_layers: int = 4
    noise: qc.KrausChannel | None = None
    noise_placement: NoisePlacement = NoisePlacement.AFTER_EACH_LAYER

    def __post_init__(self):
        if self.n_qubits < 1 or self.n_layers < 1:
            raise ValueError("n_qubits and n_layers must be positive")
        object.__setattr__(self, "noise_placement", NoisePlacement(self.noise_placement))

    @property
    def n_params(self) -> int:
        return 2 * self.n_qubits * self.n_layers

    @property
    def n_features(self) -> int:
        return 2 * self.n_qubits

    def with_noise(self, kind, p: float, placement=None) -> "CircuitSpec":
        return replace(
            self,
            noise=qc.KrausChannel.make(kind, p),
            noise_placement=placement or self.noise_placement,
        )

    def noiseless(self) -> "CircuitSpec":
        return replace(self, noise=None)


def init_params(spec: CircuitSpec, rng: np.random.Generator) -> np.ndarray:
    """Uniform draw in [0, 1) for every trainable angle."""
    return rng.uniform(0.0, 1.0, size=spec.n_params)


def check_params(spec: CircuitSpec, params) -> np.ndarray:
    params = np.asarray(params, dtype=float)
    if params.shape != (spec.n_params,):
        raise ParameterError(f"expected {spec.n_params} parameters, got shape {params.shape}")
    bad = np.flatnonzero(~np.isfinite(params))
    if bad.size:
        raise ParameterError(f"parameter {int(bad[0])} is not finite ({params[bad[0]]})")
    return params


def check_features(spec: CircuitSpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0 or x.shape[-1] != spec.n_features:
        raise FeatureLengthError(spec.n_features, x.shape[-1] if x.ndim else 0)
    if not np.all(np.isfinite(x)):
        raise ValueError("features must be finite")
    return x


def _encode_amps(n: int, x: np.ndarray) -> np.ndarray:
    # R_z(b) R_y(a) |0> = (cos(a/2) e^{-ib/2}, sin(a/2) e^{ib/2}); the rotated
    # register is the Kronecker product of these, qubit 0 most significant.
    half = 0.5 * x
    phase = np.exp(-1j * half[..., 1::2])
    qubits = np.stack([np.cos(half[..., 0::2]) * phase, np.sin(half[..., 0::2]) * np.conj(phase)], axis=-1)
    psi = qubits[..., 0, :]
    for j in range(1, n):
        psi = (psi[..., :, None] * qubits[..., j, None, :]).reshape(x.shape[:-1] + (1 << (j + 1),))
    for k in range(n - 1):
        psi = qc._apply_cnot(psi, k, k + 1, n)
    return psi


def encode(spec: CircuitSpec, x) -> qc.StateVector:
    """Data-dependent state for one feature vector (or a batch of them)."""
    x = check_features(spec, x)
    return qc.StateVector(spec.n_qubits, _encode_amps(spec.n_qubits, x))


def _layer_ops(spec: CircuitSpec, params: np.ndarray, layer: int):
    n = spec.n_qubits
    for q in range(n):
        base = 2 * (layer * n + q)
        yield q, qc.ry_then_rz(params[base], params[base + 1])


def _sv_expect(spec: CircuitSpec, params: np.ndarray, psi: np.ndarray) -> np.ndarray:
    n = spec.n_qubits
    for layer in range(spec.n_layers):
        for q, u in _layer_ops(spec, params, layer):
            psi = qc._apply_1q(psi, u, q, n)
        for k in range(n - 1):
            psi = qc._apply_cnot(psi, k, k + 1, n)
    return qc._expect_z_sv(psi, 0, n)


def _dm_expect(spec: CircuitSpec, params: np.ndarray, psi: np.ndarray) -> np.ndarray:
    n = spec.n_qubits
    rho = psi[..., :, None] * np.conj(psi[..., None, :])
    ch = spec.noise
    each_layer = ch is not None and spec.noise_placement is NoisePlacement.AFTER_EACH_LAYER
    for layer in range(spec.n_layers):
        for q, u in _layer_ops(spec, params, layer):
            rho = qc._dm_apply_1q(rho, u, q, n)
        for k in range(n - 1):
            rho = qc._dm_apply_cnot(rho, k, k + 1, n)
        if each_layer:
            for q in range(n):
                rho = qc._dm_apply_kraus(rho, ch.operators, q, n)
    if ch is not None and not each_layer:
        for q in range(n):
            rho = qc._dm_apply_kraus(rho, ch.operators, q, n)
    return qc._expect_z_dm(rho, 0, n)


def proba_from_encoded(
    spec: CircuitSpec, params: np.ndarray, psi: np.ndarray, density: bool | None = None
) -> np.ndarray:
    """Run the trainable layers on already-encoded amplitudes and read out.

    Encoding does not depend on the parameters, so callers that evaluate
    many parameter vectors on one batch encode once and reuse ``psi``.
    """
    if density is None:
        density = spec.noise is not None
    ez = _dm_expect(spec, params, psi) if density else _sv_expect(spec, params, psi)
    return np.clip((1.0 + ez) / 2.0, 0.0, 1.0)


def encode_batch(spec: CircuitSpec, x: np.ndarray) -> np.ndarray:
    """Encoded amplitudes for an unvalidated batch, shape ``(..., 2**n_qubits)``."""
    return _encode_amps(spec.n_qubits, x)


def predict_proba(spec: CircuitSpec, params: np.ndarray, x: np.ndarray, density: bool | None = None) -> np.ndarray:
    """Unvalidated batch forward pass; ``x`` has shape ``(..., n_features)``."""
    return proba_from_encoded(spec, params, _encode_amps(spec.n_qubits, x), density)


def forward(spec: CircuitSpec, params, x, density: bool | None = None):
    """Fraud probability in [0, 1].

    ``x`` is one feature vector (returns a float) or a 2-D batch (returns an
    array). With ``spec.noise`` set, the circuit is simulated as a density
    matrix; ``density=True`` forces that path for a noiseless spec as well.
    """
    params = check_params(spec, params)
    x = check_features(spec, x)
    out = predict_proba(spec, params, x, density)
    return float(out) if out.ndim == 0 else out


def predict_label(spec: CircuitSpec, params, x, threshold: float = 0.5):
    """1 when the fraud probability reaches ``threshold`` (ties go to fraud)."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    y = forward(spec, params, x)
    return labels_from_proba(y, threshold)


# Probabilities within this distance of the threshold count as ties.
TIE_ATOL = 1e-12


def labels_from_proba(y, threshold: float = 0.5):
    labels = (np.asarray(y) >= threshold - TIE_ATOL).astype(int)
    return int(labels) if labels.ndim == 0 else labels
