"""Acceptance criteria 1-10. Each test prints one PASS/FAIL line, and the
terminal summary repeats all of them."""

import time

import numpy as np
import pytest

from qfedfraud import cli, data, training, validation
from qfedfraud.config import from_dict
from qfedfraud.federated import (
    ClientState,
    FederatedConfig,
    client_seed,
    evaluate_under_noise,
    init_seed,
    partition_iid,
    run_federated,
)
from qfedfraud.model import CircuitSpec, encode_batch, init_params, proba_from_encoded
from qfedfraud.training import AdamConfig, Batch, local_train, param_shift_grad


def timed(fn):
    start = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - start


def cpu_time(fn):
    # process time ignores preemption by other tenants of the machine
    start = time.process_time()
    fn()
    return time.process_time() - start


def test_c01_gradient_oracle(acceptance_report):
    result, elapsed = timed(lambda: validation.check_gradient(n_instances=50, step=1e-5, tol=1e-5))
    ok = result.passed and elapsed < 60
    acceptance_report(1, "gradient oracle", ok,
                      f"50 instances, max |shift - FD| = {result.worst:.2e} (tol 1e-5), {elapsed:.1f}s (< 60s)")
    assert result.worst < 1e-5
    assert elapsed < 60


def test_c02_simulator_oracle(acceptance_report):
    result, elapsed = timed(lambda: validation.check_simulator(n_circuits=200))
    ok = result.passed and elapsed < 10
    acceptance_report(2, "simulator oracle", ok,
                      f"200 circuits n<=3, max deviation {result.worst:.2e} (tol 1e-10), {elapsed:.2f}s (< 10s)")
    assert result.worst < 1e-10
    assert elapsed < 10


def test_c03_channel_cptp(acceptance_report):
    result = validation.check_channels(grid=(0.0, 0.25, 0.5, 0.75, 1.0), n_states=100, tol=1e-10)
    acceptance_report(3, "channel CPTP", result.passed,
                      f"6 channels x 5 strengths, 100 states each, worst {result.worst:.2e} (tol 1e-10)")
    assert result.failures == []
    assert result.worst < 1e-10


def test_c04_noise_limits(acceptance_report):
    result = validation.check_noise_limits(n_inputs=20)
    acceptance_report(4, "noise limit identities", result.passed,
                      f"p=0 unchanged and depolarizing p=1 -> 0.5, worst {result.worst:.2e} (tol 1e-10)")
    assert result.worst < 1e-10


def separable(n, seed):
    rng = np.random.default_rng(seed)
    y = np.arange(n) % 2
    x = 0.2 * rng.normal(size=(n, 8))
    x[:, 0] += np.where(y == 1, -1.0, 1.0)
    return Batch(x, y)


def test_c05_federated_degeneracies(acceptance_report):
    spec = CircuitSpec()
    train, val = separable(80, 0), separable(20, 1)

    cfg = FederatedConfig(n_clients=1, rounds=1, local_iters=2, seed=11)
    model, _ = run_federated(cfg, spec, AdamConfig(), train, val)
    (client,) = partition_iid(train.features, train.labels, 1, cfg.seed, cfg.local_validation_fraction)
    client.params = init_params(spec, np.random.default_rng(init_seed(cfg.seed)))
    alone, _ = local_train(client, spec, AdamConfig(), cfg.local_iters, cfg.convergence,
                           np.random.default_rng(client_seed(cfg.seed, 1, 0)), cfg.batch_size)
    single_ok = model.params.tobytes() == alone.tobytes()

    shard, local = Batch(train.features[:64], train.labels[:64]), Batch(train.features[64:], train.labels[64:])
    cfg = FederatedConfig(n_clients=5, rounds=3, seed=11)
    many, _ = run_federated(cfg, spec, AdamConfig(), train, val,
                            clients=[ClientState(i, shard, local, rng_key=0) for i in range(5)])
    one, _ = run_federated(cfg, spec, AdamConfig(), train, val, clients=[ClientState(0, shard, local, rng_key=0)])
    shard_ok = many.params.tobytes() == one.params.tobytes()

    acceptance_report(5, "federated degeneracies", single_ok and shard_ok,
                      f"N=1 bit-identical to local_train: {single_ok}; "
                      f"5 identical shards bit-identical to one: {shard_ok}")
    assert single_ok
    assert shard_ok


@pytest.fixture(scope="module")
def desk_scale_run():
    table = data.synth_fraud(2000, class_sep=2.0, fraud_rate=0.5, seed=0)
    prepared = data.prepare(table, target_dim=8, seed=0)
    cfg = FederatedConfig(n_clients=4, rounds=50, seed=0)
    spec = CircuitSpec()
    (model, history), elapsed = timed(lambda: run_federated(
        cfg, spec, AdamConfig(), prepared.train.to_batch(), prepared.validation.to_batch()))
    return spec, model, [r for r in history if r.scope == "global"], prepared, elapsed


def test_c06_desk_scale_convergence(acceptance_report, desk_scale_run):
    _, _, history, _, elapsed = desk_scale_run
    best = max(r.accuracy for r in history)
    first_hit = next((r.round for r in history if r.accuracy >= 0.9), None)
    ratio = history[0].mse_loss / history[-1].mse_loss
    acc_ok, mse_ok, time_ok = first_hit is not None, ratio >= 5.0, elapsed < 600
    acceptance_report(
        6, "desk-scale convergence", acc_ok and mse_ok and time_ok,
        f"accuracy >= 0.90 first at round {first_hit} (best {best:.3f}, final {history[-1].accuracy:.3f}); "
        f"MSE {history[0].mse_loss:.4f} -> {history[-1].mse_loss:.4f} = {ratio:.2f}x (need >= 5x); "
        f"{elapsed:.0f}s (< 600s)",
    )
    assert acc_ok
    assert time_ok
    assert mse_ok, f"MSE reduction {ratio:.2f}x is below 5x"


GRID = [round(0.1 * i, 1) for i in range(11)]


def test_c07_depolarizing_shape(acceptance_report, desk_scale_run):
    spec, model, history, prepared, _ = desk_scale_run
    val = prepared.validation.to_batch()
    cells = evaluate_under_noise(spec, model.params, val, ["depolarizing"], GRID)
    acc = [c.accuracy for c in cells]
    violations = sum(b > a for a, b in zip(acc, acc[1:]))
    p0_ok = abs(acc[0] - history[-1].accuracy) < 1e-10
    p1_ok = bool(np.max(np.abs(cells[-1].predictions - 0.5)) < 1e-10)
    ok = violations <= 1 and p0_ok and p1_ok
    acceptance_report(7, "depolarizing shape", ok,
                      f"accuracy {' '.join(f'{a:.3f}' for a in acc)}; {violations} increase(s) (<= 1 allowed); "
                      f"p=0 equals noiseless: {p0_ok}; p=1 all y_hat = 0.5: {p1_ok}")
    assert violations <= 1
    assert p0_ok and p1_ok


def test_c08_split_arithmetic(acceptance_report):
    table = data.synth_fraud(144_233, n_features=2, n_informative=1, missing_rate=0.0, seed=0)
    train, val = data.split(table, 0.8, seed=0)
    ok = (len(train), len(val)) == (115_386, 28_847)
    acceptance_report(8, "split arithmetic", ok, f"144,233 rows -> {len(train):,} / {len(val):,}")
    assert ok


def test_c09_determinism(acceptance_report, tmp_path):
    import yaml

    raw = {
        "data": {"synthetic": {"n_samples": 300}},
        "federated": {"n_clients": 3, "rounds": 3},
        "seeds": {"master": 5, "trials": 2},
    }
    from_dict(raw)
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text(yaml.safe_dump(raw), encoding="utf-8")
    for out in ("a", "b"):
        assert cli.main(["train", "--config", str(cfg), "--out", str(tmp_path / out)]) == 0
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    same = names == sorted(p.name for p in (tmp_path / "b").iterdir()) and all(
        (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes() for n in names
    )
    acceptance_report(9, "determinism", same, f"{len(names)} result files byte-identical across two runs: {same}")
    assert same


def test_c10_complexity(acceptance_report, monkeypatch):
    rng = np.random.default_rng(0)
    x = rng.normal(size=(64, 8))
    labels = rng.integers(0, 2, 64)
    layers = [1, 2, 4, 8]

    fwd = {}
    for L in layers:
        spec = CircuitSpec(4, L)
        p = rng.uniform(0, 2 * np.pi, spec.n_params)
        fwd[L] = float(np.median([
            cpu_time(lambda: [proba_from_encoded(spec, p, encode_batch(spec, x)) for _ in range(20)])
            for _ in range(7)
        ]))
    fwd_ratio = {L: fwd[L] / (fwd[1] * L) for L in layers}
    fwd_ok = all(r <= 1.25 for r in fwd_ratio.values())

    # Gradient cost in units of one circuit evaluation at the same depth,
    # fitted as c(P) = k P with k the geometric mean of c(P) / P.
    cost = {}
    for L in layers:
        spec = CircuitSpec(4, L)
        p = rng.uniform(0, 2 * np.pi, spec.n_params)
        psi = encode_batch(spec, x)
        batch = Batch(x, labels)
        reps = 2 * spec.n_params + 1
        ratios = []
        for _ in range(7):
            t_eval = cpu_time(lambda: [proba_from_encoded(spec, p, psi) for _ in range(reps)]) / reps
            ratios.append(cpu_time(lambda: param_shift_grad(spec, p, batch)) / t_eval)
        cost[spec.n_params] = float(np.median(ratios))
    k = float(np.exp(np.mean([np.log(c / P) for P, c in cost.items()])))
    grad_ratio = {P: c / (k * P) for P, c in cost.items()}
    grad_ok = all(0.75 <= r <= 1.25 for r in grad_ratio.values())

    calls = []
    real = training.proba_from_encoded
    monkeypatch.setattr(training, "proba_from_encoded", lambda *a, **k: calls.append(1) or real(*a, **k))
    param_shift_grad(CircuitSpec(4, 4), np.zeros(32), Batch(x[:4], labels[:4]))
    count_ok = len(calls) == 2 * 32 + 1

    ok = fwd_ok and grad_ok and count_ok
    acceptance_report(
        10, "complexity", ok,
        "forward t(L)/(L t(1)) " + ", ".join(f"L={L}: {fwd_ratio[L]:.2f}" for L in layers) + " (<= 1.25); "
        f"gradient cost / ({k:.2f} P) " + ", ".join(f"P={P}: {grad_ratio[P]:.2f}" for P in grad_ratio)
        + f" (0.75..1.25); {len(calls)} evaluations for P=32",
    )
    assert fwd_ok, fwd_ratio
    assert grad_ok, grad_ratio
    assert count_ok
