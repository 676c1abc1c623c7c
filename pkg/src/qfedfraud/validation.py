"""Self-checks run by ``qfedfraud validate``.

Each check compares a production code path with an independent reference
from :mod:`qfedfraud.oracles` and reports the worst deviation seen.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import oracles
from . import quantum as qc
from .model import CircuitSpec, forward
from .training import Batch, mse_loss, param_shift_grad


@dataclass
class CheckResult:
    name: str
    tolerance: float
    worst: float
    failures: list[str]

    @property
    def passed(self) -> bool:
        return not self.failures and self.worst <= self.tolerance

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        out = f"{status} {self.name}: tolerance {self.tolerance:.0e}, worst deviation {self.worst:.3e}"
        if self.failures:
            out += "\n" + "\n".join(f"    - {f}" for f in self.failures)
        return out


def check_gradient(n_instances: int = 50, batch_size: int = 4, seed: int = 0,
                   step: float = 1e-5, tol: float = 1e-5) -> CheckResult:
    """Parameter-shift gradients vs central differences at n=4, L=4."""
    rng = np.random.default_rng(seed)
    spec = CircuitSpec(4, 4)
    worst = 0.0
    for _ in range(n_instances):
        params = rng.uniform(0, 2 * np.pi, spec.n_params)
        batch = Batch(rng.normal(size=(batch_size, spec.n_features)), rng.integers(0, 2, batch_size))
        g = param_shift_grad(spec, params, batch)
        fd = oracles.central_difference(lambda p: mse_loss(spec, p, batch), params, step)
        worst = max(worst, float(np.max(np.abs(g - fd))))
    return CheckResult("gradient vs finite differences", tol, worst, [])


def _random_gate(n: int, rng: np.random.Generator):
    if n > 1 and rng.random() < 0.4:
        c, t = (int(v) for v in rng.choice(n, 2, replace=False))
        if rng.random() < 0.5:
            return qc.cnot(c, t), oracles.embed_2q(oracles.oracle_cnot(), c, t, n)
        m = oracles.random_unitary(4, rng)
        return qc.Gate2Q(m, c, t), oracles.embed_2q(m, c, t, n)
    q = int(rng.integers(n))
    u = oracles.random_unitary(2, rng)
    return qc.Gate1Q(u, q), oracles.embed_1q(u, q, n)


def check_simulator(n_circuits: int = 200, depth: int = 8, seed: int = 0, tol: float = 1e-10) -> CheckResult:
    """Gate kernels vs Kronecker-product matrices for 1 to 3 qubits."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(n_circuits):
        n = 1 + i % 3
        psi0 = oracles.random_state(n, rng)
        rho0 = oracles.random_density_matrix(n, rng)
        state, rho = qc.StateVector(n, psi0), qc.DensityMatrix(n, rho0)
        ref_psi, ref_rho = psi0.copy(), rho0.copy()
        for _ in range(depth):
            gate, full = _random_gate(n, rng)
            state = qc.apply_gate_sv(state, gate)
            rho = qc.apply_gate_dm(rho, gate)
            ref_psi = full @ ref_psi
            ref_rho = full @ ref_rho @ np.conj(full).T
        worst = max(worst, float(np.max(np.abs(state.amps - ref_psi))),
                    float(np.max(np.abs(rho.elems - ref_rho))))
    return CheckResult("simulator vs Kronecker oracle", tol, worst, [])


ChannelFactory = Callable[[float], list]

DEFAULT_GRID = (0.0, 0.25, 0.5, 0.75, 1.0)


def default_factories() -> dict[str, ChannelFactory]:
    return {k.value: (lambda p, k=k: qc.kraus_operators(k, p)) for k in qc.NoiseKind}


def check_channels(factories: dict[str, ChannelFactory] | None = None, grid=DEFAULT_GRID,
                   n_states: int = 100, seed: int = 0, tol: float = 1e-10) -> CheckResult:
    """Completeness of every Kraus set, plus trace and Hermiticity on random states."""
    factories = factories or default_factories()
    rng = np.random.default_rng(seed)
    worst = 0.0
    failures = []
    for name, make in factories.items():
        for p in grid:
            ops = [np.asarray(k, dtype=complex) for k in make(p)]
            err = qc.completeness_error(ops)
            worst = max(worst, err)
            if err > tol:
                failures.append(f"{name} at p={p}: sum K^dagger K deviates from I by {err:.3e}")
                continue
            for _ in range(n_states // len(grid) or 1):
                rho = oracles.random_density_matrix(2, rng)
                out = sum(
                    oracles.embed_1q(k, 1, 2) @ rho @ np.conj(oracles.embed_1q(k, 1, 2)).T for k in ops
                )
                worst = max(worst, abs(np.trace(out) - 1.0), float(np.max(np.abs(out - np.conj(out).T))))
    return CheckResult("channel CPTP", tol, worst, failures)


def check_noise_limits(n_inputs: int = 20, seed: int = 0, tol: float = 1e-10) -> CheckResult:
    """p=0 leaves the classifier unchanged; full depolarization gives 0.5."""
    rng = np.random.default_rng(seed)
    spec = CircuitSpec()
    worst = 0.0
    for _ in range(n_inputs):
        params = rng.uniform(-np.pi, np.pi, spec.n_params)
        x = rng.normal(size=spec.n_features)
        clean = forward(spec, params, x)
        for kind in qc.NoiseKind:
            for placement in ("after_each_layer", "after_full_circuit"):
                worst = max(worst, abs(forward(spec.with_noise(kind, 0.0, placement), params, x) - clean))
        for placement in ("after_each_layer", "after_full_circuit"):
            worst = max(worst, abs(forward(spec.with_noise("depolarizing", 1.0, placement), params, x) - 0.5))
    return CheckResult("noise limit identities", tol, worst, [])


def run_all(quick: bool = False) -> list[CheckResult]:
    scale = 5 if quick else 1
    return [
        check_simulator(n_circuits=200 // scale),
        check_channels(),
        check_gradient(n_instances=50 // scale),
        check_noise_limits(),
    ]
