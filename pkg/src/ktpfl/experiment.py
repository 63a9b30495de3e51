"""Config-driven runs: build the federation, simulate, write artifacts, compare summaries."""

from __future__ import annotations

import csv
import json
import logging
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .config import ExperimentConfig, SyntheticSpec
from .data import Dataset, carve_public, load_idx, partition_dirichlet, partition_label_skew, synth_gen
from .errors import ConfigError
from .fedsim import (
    ClientState,
    FedHyper,
    Federation,
    RoundMetrics,
    ServerState,
    init_clients,
    init_server,
    simulate,
)
from .knowledge import KnowledgeHyper, write_coefficients_csv

log = logging.getLogger(__name__)

METRICS_HEADER = ("round", "client_id", "test_acc", "private_loss", "distill_loss", "up_bytes", "down_bytes")

# seed offsets so the main and public synthetic corpora differ when both derive from the run seed
_MAIN_DATA, _PUBLIC_DATA, _PARTITION, _CARVE = 11, 13, 17, 19


@dataclass
class RunResult:
    config: ExperimentConfig
    federation: Federation
    server: ServerState
    clients: list[ClientState]
    history: list[RoundMetrics]
    summary: dict


def _synthetic(spec: SyntheticSpec, seed: int, offset: int) -> Dataset:
    s = spec.seed if spec.seed is not None else int(np.random.SeedSequence([seed, offset]).generate_state(1)[0])
    return synth_gen(spec.num_classes, spec.samples_per_class, spec.d_in, spec.cluster_spread, s)


def fed_hyper(cfg: ExperimentConfig, workers: Optional[int] = None) -> FedHyper:
    t = cfg.train
    return FedHyper(
        local_epochs=t.local_epochs,
        distill_steps=t.distill_steps,
        batch_size=t.batch_size,
        public_batch_size=t.public_batch_size,
        lr_local=t.lr_local,
        lr_distill=t.lr_distill,
        knowledge=KnowledgeHyper(lam=t.lam, rho=t.rho, T=t.temperature, eta3=t.lr_coeff, K=t.top_k, eps=t.kl_eps),
        public_size=cfg.public.size,
        sample_rate=t.sample_rate,
        normalize_coefficients=cfg.flags.normalize_coefficients,
        public_resample_each_round=cfg.flags.public_resample_each_round,
        finetune_epochs=t.finetune_epochs,
        workers=cfg.workers if workers is None else workers,
        seed=cfg.seed,
    )


def build_federation(cfg: ExperimentConfig, workers: Optional[int] = None) -> Federation:
    if cfg.dataset.kind == "synthetic":
        main = _synthetic(cfg.dataset.synthetic, cfg.seed, _MAIN_DATA)
    else:
        main = load_idx(cfg.dataset.images, cfg.dataset.labels, cfg.dataset.num_classes)

    pub = cfg.public
    pool_size = pub.size if pub.pool_size is None else pub.pool_size
    reserve = pool_size if pub.source == "reuse" else 0
    part_seed = int(np.random.SeedSequence([cfg.seed, _PARTITION]).generate_state(1)[0])
    if cfg.partition.kind == "label_skew":
        partition = partition_label_skew(main, cfg.num_clients, cfg.partition.labels_per_client, part_seed, reserve)
    else:
        partition = partition_dirichlet(main, cfg.num_clients, cfg.partition.alpha, part_seed, reserve)

    if pub.source == "reuse":
        pool = main.subset(partition.public)
        if not pub.labeled:
            pool = Dataset(pool.inputs, None, pool.num_classes)
        if pool_size == 0:
            warnings.warn("public set is empty; distillation will be a no-op", stacklevel=2)
    else:
        source = (_synthetic(pub.synthetic, cfg.seed, _PUBLIC_DATA) if pub.source == "synthetic"
                  else load_idx(pub.images, pub.labels))
        if source.d_in != main.d_in:
            raise ConfigError(f"public inputs have {source.d_in} features, private data {main.d_in}", key="public")
        pool = carve_public(source, pool_size, pub.labeled, int(np.random.SeedSequence([cfg.seed, _CARVE]).generate_state(1)[0]))
    return Federation(main, partition, pool, fed_hyper(cfg, workers))


def build_clients(cfg: ExperimentConfig, fed: Federation) -> list[ClientState]:
    archs, groups = [], []
    for g, group in enumerate(cfg.model_groups):
        archs += [list(group.hidden)] * group.count
        groups += [g] * group.count
    return init_clients(fed, archs, groups)


def write_metrics_csv(path, history: Sequence[RoundMetrics]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRICS_HEADER)
        for m in history:
            for n in range(len(m.test_acc)):
                w.writerow([m.round, n, repr(m.test_acc[n]), repr(m.private_loss[n]), repr(m.distill_loss[n]),
                            m.up_bytes[n], m.down_bytes[n]])


def make_summary(cfg: ExperimentConfig, fed: Federation, server: ServerState, history: Sequence[RoundMetrics]) -> dict:
    avg = [m.avg_accuracy for m in history]
    best = int(np.argmax(avg))
    return {
        "algorithm": cfg.algorithm,
        "seed": cfg.seed,
        "rounds": len(history),
        "final_avg_accuracy": avg[-1],
        "best_avg_accuracy": avg[best],
        "best_round": history[best].round,
        "final_client_accuracy": list(history[-1].test_acc),
        "bytes_by_kind": server.ledger.totals_by_kind(),
        "total_up_bytes": server.ledger.total("up"),
        "total_down_bytes": server.ledger.total("down"),
        "dataset_fingerprint": cfg.task_fingerprint(),
        "data_hash": fed.data.fingerprint(),
        "config": cfg.to_dict(),
    }


def run_experiment(cfg: ExperimentConfig, output_dir=None, workers: Optional[int] = None,
                   write: bool = True) -> RunResult:
    """Deterministic end-to-end run. Writes metrics.csv, summary.json and, when
    enabled, coefficients/round_XXXX.csv under ``output_dir`` (default: the config's)."""
    fed = build_federation(cfg, workers)
    clients = build_clients(cfg, fed)
    server = init_server(fed, cfg.algorithm, clients)
    out = Path(output_dir if output_dir is not None else cfg.output_dir)
    snap = write and cfg.flags.snapshot_coefficients
    if write:
        out.mkdir(parents=True, exist_ok=True)
    if snap:
        (out / "coefficients").mkdir(exist_ok=True)

    def on_round(server, clients, metrics):
        if snap:
            write_coefficients_csv(out / "coefficients" / f"round_{metrics.round:04d}.csv", server.c)

    server, clients, history = simulate(fed, server, clients, cfg.rounds, on_round)
    summary = make_summary(cfg, fed, server, history)
    if write:
        write_metrics_csv(out / "metrics.csv", history)
        (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    log.info("%s seed %d: final %.4f best %.4f", cfg.algorithm, cfg.seed,
             summary["final_avg_accuracy"], summary["best_avg_accuracy"])
    return RunResult(cfg, fed, server, clients, history, summary)


# ---------------------------------------------------------------- comparison

COMPARE_COLUMNS = ("algorithm", "runs", "final_acc_mean", "final_acc_std", "best_acc_mean", "total_bytes_mean",
                   "delta_final")


def load_summary(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read summary {path}: {exc}") from None


def compare_runs(summaries: Sequence[dict]) -> list[dict]:
    """One row per algorithm (first-appearance order): mean and sample std over runs.

    ``delta_final`` is each row's mean final accuracy minus the first row's.
    """
    if len(summaries) < 2:
        raise ConfigError(f"compare needs at least 2 summaries, got {len(summaries)}")
    prints = {s.get("dataset_fingerprint") for s in summaries}
    if len(prints) > 1:
        warnings.warn(f"summaries come from different tasks (fingerprints {sorted(map(str, prints))})", stacklevel=2)
    grouped: dict[str, list[dict]] = {}
    for s in summaries:
        grouped.setdefault(s["algorithm"], []).append(s)
    rows = []
    for alg, runs in grouped.items():
        final = np.array([r["final_avg_accuracy"] for r in runs])
        rows.append({
            "algorithm": alg,
            "runs": len(runs),
            "final_acc_mean": float(final.mean()),
            "final_acc_std": float(final.std(ddof=1)) if len(runs) > 1 else 0.0,
            "best_acc_mean": float(np.mean([r["best_avg_accuracy"] for r in runs])),
            "total_bytes_mean": float(np.mean([r["total_up_bytes"] + r["total_down_bytes"] for r in runs])),
        })
    for r in rows:
        r["delta_final"] = r["final_acc_mean"] - rows[0]["final_acc_mean"]
    return rows


def format_table(rows: Sequence[dict]) -> str:
    cells = [["algorithm", "runs", "final acc", "best acc", "total MB", "delta final"]]
    for r in rows:
        cells.append([
            r["algorithm"],
            str(r["runs"]),
            f"{100 * r['final_acc_mean']:.2f} ± {100 * r['final_acc_std']:.2f}",
            f"{100 * r['best_acc_mean']:.2f}",
            f"{r['total_bytes_mean'] / 1e6:.3f}",
            f"{100 * r['delta_final']:+.2f}",
        ])
    widths = [max(len(row[i]) for row in cells) for i in range(len(cells[0]))]
    return "\n".join("  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(row, widths)))
                     for row in cells)


def write_table_csv(path, rows: Sequence[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=COMPARE_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow(r)
