"""Federated training runtime: sharding, local rounds, aggregation, broadcast.

Clients are in-process objects. Each one owns its shard and optimizer
state; the server side only ever sees :class:`ClientUpdate` messages
(client id, parameter vector, shard size). Round structure::

    theta <- U[0, 1)^P
    for each round:
        every client: theta_i <- theta; local_train on its own shard
        server:       theta <- aggregate(updates); evaluate on global validation
"""

from __future__ import annotations

import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .metrics import MetricsRecord, confusion, derive_metrics
from .model import CircuitSpec, init_params, labels_from_proba
from .training import (
    AdamConfig,
    AdamState,
    Batch,
    ConvergenceRule,
    evaluate,
    local_train,
)


class Aggregation(str, enum.Enum):
    UNWEIGHTED_MEAN = "unweighted_mean"
    WEIGHTED_BY_SIZE = "weighted_by_size"


@dataclass(frozen=True)
class FederatedConfig:
    n_clients: int = 15
    rounds: int = 100
    local_iters: int = 1
    aggregation: Aggregation = Aggregation.UNWEIGHTED_MEAN
    seed: int = 0
    batch_size: int = 32
    local_validation_fraction: float = 0.2
    convergence: ConvergenceRule = field(default_factory=ConvergenceRule)
    workers: int = 1

    def __post_init__(self):
        if self.n_clients < 1:
            raise ValueError(f"n_clients must be >= 1, got {self.n_clients}")
        if self.rounds < 1:
            raise ValueError(f"rounds must be >= 1, got {self.rounds}")
        if self.local_iters < 0:
            raise ValueError(f"local_iters must be >= 0, got {self.local_iters}")
        if not 0.0 <= self.local_validation_fraction < 1.0:
            raise ValueError("local_validation_fraction must lie in [0, 1)")
        object.__setattr__(self, "aggregation", Aggregation(self.aggregation))


@dataclass
class ClientState:
    client_id: int
    train: Batch
    validation: Batch
    params: np.ndarray | None = None
    adam: AdamState | None = None
    rng_key: int | None = None  # shuffling seed key; defaults to client_id

    @property
    def n_samples(self) -> int:
        return len(self.train)

    def update(self) -> "ClientUpdate":
        return ClientUpdate(self.client_id, np.array(self.params, dtype=float), self.n_samples)


@dataclass(frozen=True)
class ClientUpdate:
    """What a client sends to the server. Carries no data rows."""

    client_id: int
    params: np.ndarray
    n_samples: int


@dataclass
class GlobalModel:
    params: np.ndarray
    round: int = 0


def shard_sizes(n: int, n_clients: int) -> list[int]:
    base, extra = divmod(n, n_clients)
    return [base + (1 if i < extra else 0) for i in range(n_clients)]


def partition_iid(
    features, labels, n_clients: int, seed: int, local_validation_fraction: float = 0.2
) -> list[ClientState]:
    """Shuffle once under ``seed`` and deal contiguous near-equal shards.

    Shard sizes differ by at most one. Each shard keeps its last
    ``local_validation_fraction`` of rows as a local validation split.
    """
    features = np.asarray(features, dtype=float)
    labels = np.asarray(labels)
    n = labels.shape[0]
    if n_clients < 1:
        raise ValueError("n_clients must be >= 1")
    if n_clients > n:
        raise ValueError(f"cannot split {n} samples across {n_clients} clients")
    order = np.random.default_rng(seed).permutation(n)
    clients = []
    start = 0
    for cid, size in enumerate(shard_sizes(n, n_clients)):
        idx = order[start : start + size]
        start += size
        n_val = int(np.floor(local_validation_fraction * size + 1e-9))
        if size - n_val < 1:
            n_val = 0
        tr, va = idx[: size - n_val], idx[size - n_val :]
        clients.append(
            ClientState(cid, Batch(features[tr], labels[tr]), Batch(features[va], labels[va]))
        )
    return clients


def aggregate(clients, mode: Aggregation | str = Aggregation.UNWEIGHTED_MEAN) -> np.ndarray:
    """Average client parameter vectors.

    Accepts anything with ``client_id``, ``params`` and ``n_samples``
    (``ClientState`` or ``ClientUpdate``). Summation runs in client-id order
    so the result does not depend on list order.
    """
    mode = Aggregation(mode)
    clients = sorted(clients, key=lambda c: c.client_id)
    if not clients:
        raise ValueError("cannot aggregate an empty client list")
    vecs = [np.asarray(c.params, dtype=float) for c in clients]
    shape = vecs[0].shape
    for c, v in zip(clients, vecs):
        if v.shape != shape:
            raise ValueError(f"client {c.client_id} sent shape {v.shape}, expected {shape}")
    # Running mean: exact when every client holds the same vector.
    if mode is Aggregation.UNWEIGHTED_MEAN:
        mean = vecs[0].copy()
        for k, v in enumerate(vecs[1:], start=2):
            mean = mean + (v - mean) / k
        return mean
    sizes = [c.n_samples for c in clients]
    if sum(sizes) <= 0 or min(sizes) < 0:
        raise ValueError("weighted aggregation needs positive shard sizes")
    mean = np.zeros(shape)
    seen = 0
    for size, v in zip(sizes, vecs):
        seen += size
        if seen:
            mean = mean + (size / seen) * (v - mean)
    return mean


def client_seed(seed: int, round_index: int, client_id: int) -> np.random.SeedSequence:
    """Seed for one client's batch shuffling in one round."""
    return np.random.SeedSequence([seed, 1, round_index, client_id])


def init_seed(seed: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, 0])


def score(spec: CircuitSpec, params, batch: Batch, round_index: int, scope: str, threshold: float = 0.5) -> MetricsRecord:
    mse, y_hat = evaluate(spec, params, batch)
    counts = confusion(batch.labels.astype(int), labels_from_proba(y_hat, threshold))
    return derive_metrics(counts, mse, round_index=round_index, scope=scope)


def _client_round(client: ClientState, theta, spec, adam_config, config, round_index):
    """Client side of one round: train locally, then score on the local split."""
    client.params = np.array(theta, dtype=float)
    key = client.client_id if client.rng_key is None else client.rng_key
    rng = np.random.default_rng(client_seed(config.seed, round_index, key))
    params, trace = local_train(
        client, spec, adam_config, config.local_iters, config.convergence, rng, config.batch_size
    )
    client.params = params
    client.adam = trace.adam
    val = client.validation if len(client.validation) else client.train
    return client.update(), score(spec, params, val, round_index, f"client{client.client_id}")


def run_federated(
    config: FederatedConfig,
    spec: CircuitSpec,
    adam_config: AdamConfig,
    train: Batch,
    validation: Batch,
    clients: list[ClientState] | None = None,
    initial_params: np.ndarray | None = None,
) -> tuple[GlobalModel, list[MetricsRecord]]:
    """Run ``config.rounds`` rounds and return the final model and metrics history.

    The history holds, per round, one record for each client (its locally
    trained parameters scored on its local validation split) followed by
    one ``global`` record for the aggregated parameters on ``validation``.
    ``clients`` may be supplied pre-built (e.g. identical shards); otherwise
    ``train`` is sharded with :func:`partition_iid`.
    """
    if clients is None:
        clients = partition_iid(
            train.features, train.labels, config.n_clients, config.seed,
            config.local_validation_fraction,
        )
    if initial_params is None:
        initial_params = init_params(spec, np.random.default_rng(init_seed(config.seed)))
    model = GlobalModel(np.array(initial_params, dtype=float), 0)
    history: list[MetricsRecord] = []
    pool = ThreadPoolExecutor(config.workers) if config.workers > 1 else None
    try:
        for r in range(1, config.rounds + 1):
            theta = model.params
            jobs = [(c, theta, spec, adam_config, config, r) for c in clients]
            if pool is None:
                done = [_client_round(*job) for job in jobs]
            else:
                done = list(pool.map(lambda job: _client_round(*job), jobs))
            history.extend(record for _, record in done)
            updates = [update for update, _ in done]
            model = GlobalModel(aggregate(updates, config.aggregation), r)
            history.append(score(spec, model.params, validation, r, "global"))
    finally:
        if pool is not None:
            pool.shutdown()
    return model, history


@dataclass
class SweepCell:
    kind: str
    p: float
    accuracy: float
    mse_loss: float
    predictions: np.ndarray


def _check_grid(grid) -> list[float]:
    grid = [float(p) for p in grid]
    if not grid:
        raise ValueError("noise grid is empty")
    for p in grid:
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"noise strength must lie in [0, 1], got {p}")
    return grid


def evaluate_under_noise(
    spec: CircuitSpec,
    params,
    validation: Batch,
    kinds,
    grid,
    placement=None,
    threshold: float = 0.5,
) -> list[SweepCell]:
    """Score fixed trained ``params`` under every (noise kind, strength) cell."""
    grid = _check_grid(grid)
    base = spec.noiseless()
    cells = []
    for kind in kinds:
        for p in grid:
            noisy = base.with_noise(kind, p, placement)
            cells.append(_sweep_cell(noisy, params, validation, threshold))
    return cells


def _sweep_cell(noisy: CircuitSpec, params, validation: Batch, threshold: float) -> SweepCell:
    mse, y_hat = evaluate(noisy, params, validation)
    acc = float(np.mean(labels_from_proba(y_hat, threshold) == validation.labels))
    return SweepCell(noisy.noise.kind.value, noisy.noise.p, acc, mse, y_hat)


def noise_sweep(
    config: FederatedConfig,
    spec: CircuitSpec,
    adam_config: AdamConfig,
    train: Batch,
    validation: Batch,
    kinds,
    grid,
    placement=None,
    train_noisy: bool = False,
    threshold: float = 0.5,
) -> tuple[GlobalModel, list[SweepCell]]:
    """Accuracy table over noise kinds x strengths.

    By default one model is trained noiselessly and then evaluated in every
    cell. With ``train_noisy`` each cell trains its own model under that
    cell's channel before evaluating it under the same channel; the returned
    model is then the noiseless reference run.
    """
    grid = _check_grid(grid)
    model, _ = run_federated(config, spec.noiseless(), adam_config, train, validation)
    if not train_noisy:
        return model, evaluate_under_noise(spec, model.params, validation, kinds, grid, placement, threshold)
    cells = []
    for kind in kinds:
        for p in grid:
            noisy = spec.noiseless().with_noise(kind, p, placement)
            trained, _ = run_federated(config, noisy, adam_config, train, validation)
            cells.append(_sweep_cell(noisy, trained.params, validation, threshold))
    return model, cells
