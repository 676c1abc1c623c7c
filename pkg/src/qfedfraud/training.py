"""Loss, parameter-shift gradients and the Adam optimizer for local training."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import (
    CircuitSpec,
    check_features,
    check_params,
    encode_batch,
    labels_from_proba,
    proba_from_encoded,
)

SHIFT = math.pi / 2


class GradientError(FloatingPointError):
    def __init__(self, index: int, detail: str = "non-finite value"):
        self.index = index
        super().__init__(f"gradient for parameter {index}: {detail}")


@dataclass(frozen=True)
class Batch:
    """Feature rows ``(m, n_features)`` and binary labels ``(m,)``."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.features, dtype=float))
        y = np.asarray(self.labels, dtype=float).reshape(-1)
        if x.shape[0] != y.shape[0]:
            raise ValueError(f"{x.shape[0]} feature rows but {y.shape[0]} labels")
        if y.size and not np.all((y == 0) | (y == 1)):
            raise ValueError("labels must be 0 or 1")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def size(self) -> int:
        return len(self)

    def take(self, idx) -> "Batch":
        return Batch(self.features[idx], self.labels[idx])


def _require_nonempty(batch: Batch) -> None:
    if len(batch) == 0:
        raise ValueError("batch is empty")


def mse_loss(spec: CircuitSpec, params, batch: Batch) -> float:
    """Mean squared error between labels and fraud probabilities."""
    _require_nonempty(batch)
    params = check_params(spec, params)
    x = check_features(spec, batch.features)
    y_hat = proba_from_encoded(spec, params, encode_batch(spec, x))
    return float(np.mean((batch.labels - y_hat) ** 2))


def param_shift_grad(spec: CircuitSpec, params, batch: Batch) -> np.ndarray:
    """Exact gradient of :func:`mse_loss` from 2P shifted circuit evaluations.

    The shift rule is exact for the circuit output ``y_hat``, which is a
    first-order trigonometric function of each angle. The loss is quadratic
    in ``y_hat``, so the rule is applied to the output and combined with the
    chain rule::

        d y_hat / d theta_i = (y_hat(theta + pi/2 e_i) - y_hat(theta - pi/2 e_i)) / 2
        d L / d theta_i     = mean(-2 (y - y_hat) * d y_hat / d theta_i)

    Each of the 2P evaluations covers the whole batch and is independent of
    the others. Noisy specs are differentiated along the same density-matrix
    path used for training.
    """
    _require_nonempty(batch)
    params = check_params(spec, params)
    x = check_features(spec, batch.features)
    psi = encode_batch(spec, x)
    y = batch.labels
    y_hat = proba_from_encoded(spec, params, psi)
    residual = -2.0 * (y - y_hat)
    grad = np.empty_like(params)
    for i in range(params.size):
        shifted = params.copy()
        shifted[i] = params[i] + SHIFT
        plus = proba_from_encoded(spec, shifted, psi)
        shifted[i] = params[i] - SHIFT
        minus = proba_from_encoded(spec, shifted, psi)
        grad[i] = np.mean(residual * (plus - minus) / 2.0)
        if not math.isfinite(grad[i]):
            raise GradientError(i)
    return grad


@dataclass(frozen=True)
class AdamConfig:
    learning_rate: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        for name in ("beta1", "beta2"):
            value = getattr(self, name)
            if not 0.0 <= value < 1.0:
                raise ValueError(f"{name} must lie in [0, 1), got {value}")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")


@dataclass(frozen=True)
class AdamState:
    """Raw (bias-uncorrected) moment estimates and the step counter."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0)


def adam_step(
    state: AdamState, config: AdamConfig, params, grad
) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam update; returns new params and a new state."""
    params = np.asarray(params, dtype=float)
    grad = np.asarray(grad, dtype=float)
    if not (params.shape == grad.shape == state.m.shape == state.v.shape):
        raise ValueError(
            f"length mismatch: params {params.shape}, grad {grad.shape}, "
            f"moments {state.m.shape}/{state.v.shape}"
        )
    t = state.t + 1
    m = config.beta1 * state.m + (1.0 - config.beta1) * grad
    v = config.beta2 * state.v + (1.0 - config.beta2) * grad * grad
    m_hat = m / (1.0 - config.beta1**t)
    v_hat = v / (1.0 - config.beta2**t)
    new_params = params - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.epsilon)
    return new_params, AdamState(m, v, t)


@dataclass(frozen=True)
class ConvergenceRule:
    """Stop once validation loss fails to improve by ``tolerance`` for ``patience`` epochs."""

    patience: int = 5
    tolerance: float = 1e-4


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    val_accuracy: float


@dataclass
class TrainingTrace:
    epochs: list[EpochRecord] = field(default_factory=list)
    stopped_early: bool = False
    adam: AdamState | None = None


def evaluate(spec: CircuitSpec, params, batch: Batch, threshold: float = 0.5) -> tuple[float, np.ndarray]:
    """MSE and raw fraud probabilities of ``params`` on ``batch``."""
    params = check_params(spec, params)
    y_hat = proba_from_encoded(spec, params, encode_batch(spec, check_features(spec, batch.features)))
    return float(np.mean((batch.labels - y_hat) ** 2)), y_hat


def local_train(
    client,
    spec: CircuitSpec,
    adam_config: AdamConfig,
    max_iters: int,
    convergence: ConvergenceRule | None = None,
    rng: np.random.Generator | None = None,
    batch_size: int = 32,
) -> tuple[np.ndarray, TrainingTrace]:
    """Train one client's parameters on its own shard.

    ``client`` provides ``train`` and ``validation`` batches, the starting
    ``params`` and its ``adam`` state; nothing else is read. Each of the
    ``max_iters`` epochs shuffles the training shard, takes one Adam step
    per mini-batch and scores the validation split. Returns the final
    parameters and the per-epoch trace (whose ``adam`` field carries the
    updated optimizer state).
    """
    if len(client.train) == 0:
        raise ValueError(f"client {getattr(client, 'client_id', '?')} has an empty shard")
    if batch_size < 1:
        raise ValueError("batch_size must be positive")
    rng = rng if rng is not None else np.random.default_rng(0)
    convergence = convergence or ConvergenceRule()
    params = check_params(spec, client.params).copy()
    state = client.adam if client.adam is not None else AdamState.zeros(params.size)
    trace = TrainingTrace(adam=state)
    val = client.validation if len(client.validation) else client.train
    best = math.inf
    stale = 0
    n = len(client.train)
    for epoch in range(max_iters):
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, batch_size):
            batch = client.train.take(order[start : start + batch_size])
            losses.append(mse_loss(spec, params, batch))
            grad = param_shift_grad(spec, params, batch)
            params, state = adam_step(state, adam_config, params, grad)
        val_loss, y_hat = evaluate(spec, params, val)
        acc = float(np.mean(labels_from_proba(y_hat) == val.labels))
        trace.epochs.append(EpochRecord(epoch + 1, float(np.mean(losses)), val_loss, acc))
        trace.adam = state
        if val_loss < best - convergence.tolerance:
            best = val_loss
            stale = 0
        else:
            stale += 1
            if stale >= convergence.patience:
                trace.stopped_early = epoch + 1 < max_iters
                break
    return params, trace
