"""Command-line experiment driver.

    qfedfraud train        --config cfg.yaml --out results/
    qfedfraud noise-sweep  --config cfg.yaml --out results/ [--dump-predictions]
    qfedfraud validate     [--quick]
    qfedfraud synth        --config cfg.yaml --out data/

All randomness derives from ``seeds.master`` (overridable with ``--seed``).
Output files have fixed names and contain no timestamps, so identical
configs give byte-identical results.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import data as datamod
from .config import ConfigError, ExperimentConfig, load_config
from .federated import FederatedConfig, evaluate_under_noise, noise_sweep, run_federated
from .metrics import FIELDS, MetricsRecord, export_history
from .model import CircuitSpec
from .training import AdamConfig, Batch, ConvergenceRule
from .validation import run_all

log = logging.getLogger("qfedfraud")

EXIT_OK, EXIT_FAILURE, EXIT_CONFIG = 0, 1, 2


def trial_seed(master: int, trial: int) -> int:
    return int(np.random.SeedSequence([master, 2, trial]).generate_state(1)[0])


def load_table(cfg: ExperimentConfig, seed: int) -> datamod.RawTable:
    d = cfg.data
    if d.source == "csv":
        return datamod.load_and_join(d.transactions, d.identity, key=d.key)
    s = d.synthetic
    return datamod.synth_fraud(
        s.n_samples, s.n_informative, s.class_sep, s.fraud_rate, seed,
        n_features=s.n_features, missing_rate=s.missing_rate,
    )


def build_data(cfg: ExperimentConfig, seed: int) -> datamod.PreparedData:
    d = cfg.data
    return datamod.prepare(
        load_table(cfg, seed),
        target_dim=2 * cfg.circuit.n_qubits,
        missing_threshold=d.missing_threshold,
        train_fraction=d.train_fraction,
        seed=seed,
        upsample=d.upsample,
        label=d.label,
    )


def circuit_spec(cfg: ExperimentConfig, noisy: bool = True) -> CircuitSpec:
    spec = CircuitSpec(cfg.circuit.n_qubits, cfg.circuit.n_layers, noise_placement=cfg.noise.placement)
    if noisy and cfg.noise.kind is not None:
        spec = spec.with_noise(cfg.noise.kind, cfg.noise.p)
    return spec


def adam_config(cfg: ExperimentConfig) -> AdamConfig:
    a = cfg.adam
    return AdamConfig(a.learning_rate, a.beta1, a.beta2, a.epsilon)


def federated_config(cfg: ExperimentConfig, seed: int) -> FederatedConfig:
    f = cfg.federated
    return FederatedConfig(
        n_clients=f.n_clients,
        rounds=f.rounds,
        local_iters=f.local_iters,
        aggregation=f.aggregation,
        seed=seed,
        batch_size=f.batch_size,
        local_validation_fraction=f.local_validation_fraction,
        convergence=ConvergenceRule(f.patience, f.tolerance),
    )


def _run_trial(args):
    cfg, prepared, seed = args
    model, history = run_federated(
        federated_config(cfg, seed), circuit_spec(cfg), adam_config(cfg),
        prepared.train.to_batch(), prepared.validation.to_batch(),
    )
    return model.params, history


def _map(fn, jobs, parallel: int):
    if parallel > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            return list(pool.map(fn, jobs))
    return [fn(job) for job in jobs]


def average_history(histories: list[list[MetricsRecord]]) -> list[MetricsRecord]:
    """Mean of each metric across trials, matched by (round, scope)."""
    grouped: dict[tuple[int, str], list[MetricsRecord]] = {}
    for history in histories:
        for rec in history:
            grouped.setdefault((rec.round, rec.scope), []).append(rec)
    out = []
    for (rnd, scope), recs in grouped.items():
        means = {k: float(np.mean([getattr(r, k) for r in recs])) for k in FIELDS[2:]}
        out.append(MetricsRecord(round=rnd, scope=scope, **means))
    return out


def _final_summary(histories, cfg: ExperimentConfig, seeds: list[int]) -> dict:
    finals = [[r for r in h if r.scope == "global"][-1] for h in histories]
    metrics = {}
    for k in FIELDS[2:]:
        values = np.array([getattr(r, k) for r in finals])
        metrics[k] = {"mean": float(values.mean()), "std": float(values.std())}
    return {
        "trials": len(histories),
        "final_round": finals[0].round,
        "trial_seeds": seeds,
        "final_global": metrics,
        "per_trial_final": [{k: getattr(r, k) for k in FIELDS} for r in finals],
        "config": cfg.to_dict(),
    }


def _write(path: Path, payload: bytes | str) -> None:
    if isinstance(payload, str):
        payload = payload.encode("utf-8")
    path.write_bytes(payload)


def cmd_train(cfg: ExperimentConfig, out: Path, parallel: int = 1) -> int:
    master = cfg.seeds.master
    prepared = build_data(cfg, master)
    seeds = [trial_seed(master, k) for k in range(cfg.seeds.trials)]
    log.info("training %d trial(s) on %d rows, validating on %d", len(seeds), len(prepared.train), len(prepared.validation))
    results = _map(_run_trial, [(cfg, prepared, s) for s in seeds], parallel)
    histories = [h for _, h in results]
    out.mkdir(parents=True, exist_ok=True)
    for k, (params, history) in enumerate(results):
        _write(out / f"history_trial{k:02d}.csv", export_history(history, "csv"))
        _write(out / f"params_trial{k:02d}.json", json.dumps([float(v) for v in params]) + "\n")
    _write(out / "history_mean.csv", export_history(average_history(histories), "csv"))
    _write(out / "summary.json", json.dumps(_final_summary(histories, cfg, seeds), indent=1) + "\n")
    final = _final_summary(histories, cfg, seeds)["final_global"]
    print(
        f"final global accuracy {final['accuracy']['mean']:.4f} +/- {final['accuracy']['std']:.4f}, "
        f"mse {final['mse_loss']['mean']:.4f} over {len(seeds)} trial(s)"
    )
    return EXIT_OK


def _sweep_job(args):
    cfg, prepared, seed, kind, p = args
    fed = federated_config(cfg, seed)
    train_b, val_b = prepared.train.to_batch(), prepared.validation.to_batch()
    _, cells = noise_sweep(fed, circuit_spec(cfg, noisy=False), adam_config(cfg), train_b, val_b,
                           [kind], [p], cfg.noise.placement, train_noisy=True)
    return cells[0]


def cmd_noise_sweep(cfg: ExperimentConfig, out: Path, parallel: int = 1, dump_predictions: bool = False) -> int:
    master = cfg.seeds.master
    prepared = build_data(cfg, master)
    seed = trial_seed(master, 0)
    spec = circuit_spec(cfg, noisy=False)
    train_b, val_b = prepared.train.to_batch(), prepared.validation.to_batch()
    kinds, grid = list(cfg.noise.sweep_kinds), [float(p) for p in cfg.noise.sweep_grid]
    if cfg.noise.train_noisy:
        jobs = [(cfg, prepared, seed, k, p) for k in kinds for p in grid]
        cells = _map(_sweep_job, jobs, parallel)
    else:
        model, _ = run_federated(federated_config(cfg, seed), spec, adam_config(cfg), train_b, val_b)
        cells = evaluate_under_noise(spec, model.params, val_b, kinds, grid, cfg.noise.placement)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["kind,p,accuracy,mse_loss"]
    lines += [f"{c.kind},{c.p!r},{c.accuracy!r},{c.mse_loss!r}" for c in cells]
    _write(out / "noise_sweep.csv", "\n".join(lines) + "\n")
    table = {}
    for c in cells:
        table.setdefault(c.kind, {})[c.p] = c.accuracy
    wide = ["kind," + ",".join(repr(p) for p in grid)]
    wide += [k + "," + ",".join(repr(row[p]) for p in grid) for k, row in table.items()]
    _write(out / "noise_sweep_table.csv", "\n".join(wide) + "\n")
    if dump_predictions:
        rows = ["kind,p,sample,label,y_hat"]
        for c in cells:
            rows += [f"{c.kind},{c.p!r},{i},{int(y)},{float(v)!r}"
                     for i, (y, v) in enumerate(zip(val_b.labels, c.predictions))]
        _write(out / "noise_sweep_predictions.csv", "\n".join(rows) + "\n")
    print(f"wrote {len(cells)} sweep cells ({len(table)} kinds x {len(grid)} strengths)")
    return EXIT_OK


def cmd_validate(quick: bool = False) -> int:
    results = run_all(quick=quick)
    for r in results:
        print(r.line())
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"{len(failed)} check(s) failed: {', '.join(failed)}")
        return EXIT_FAILURE
    print("all checks passed")
    return EXIT_OK


def cmd_synth(cfg: ExperimentConfig, out: Path) -> int:
    table = load_table(cfg, cfg.seeds.master) if cfg.data.source == "synthetic" else None
    if table is None:
        raise ConfigError("data.source: synth needs data.source = 'synthetic'")
    out.mkdir(parents=True, exist_ok=True)
    datamod.write_csv(table, out / "transactions.csv")
    print(f"wrote {table.n_rows} rows to {out / 'transactions.csv'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML experiment config")
    common.add_argument("--out", type=Path, help="output directory (default: config output_dir)")
    common.add_argument("--seed", type=int, help="override seeds.master")
    common.add_argument("--parallel", type=int, default=1, help="worker processes for trials / sweep cells")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="qfedfraud", description=__doc__.split("\n")[0] or None)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("train", parents=[common], help="federated training over seeded trials")
    sweep = sub.add_parser("noise-sweep", parents=[common], help="accuracy under each noise channel")
    sweep.add_argument("--dump-predictions", action="store_true", help="also write raw y_hat per cell")
    val = sub.add_parser("validate", parents=[common], help="run the oracle self-checks")
    val.add_argument("--quick", action="store_true", help="fewer random instances")
    sub.add_parser("synth", parents=[common], help="write a synthetic transactions CSV")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "validate":
            return cmd_validate(args.quick)
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seeds.master = args.seed
        if args.parallel < 1:
            raise ConfigError("--parallel: must be >= 1")
        out = args.out or Path(cfg.output_dir)
        if args.command == "train":
            return cmd_train(cfg, out, args.parallel)
        if args.command == "noise-sweep":
            return cmd_noise_sweep(cfg, out, args.parallel, args.dump_predictions)
        return cmd_synth(cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, datamod.CSVFormatError, datamod.DuplicateKeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
