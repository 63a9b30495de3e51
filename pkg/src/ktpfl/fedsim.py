"""Round-based federated simulation: KT-pFL and its baselines.

A round fans out over the participating clients (optionally on a thread pool)
and reduces their results in ascending client id, so the metric stream does
not depend on the number of workers.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .data import Dataset, Partition, batches
from .errors import ConfigError, KtpflError, ProtocolError
from .knowledge import (
    KnowledgeHyper,
    SoftPredictionBank,
    coeff_gradient,
    coeff_update,
    cosine_coefficients,
    embed_block,
    ensemble_teacher,
    soft_predict,
    topk_coefficients,
    uniform_coefficients,
)
from .nn import (
    BYTES_PER_VALUE,
    Model,
    accuracy,
    ce_loss,
    flatten_params,
    grad_ce,
    grad_kl_student,
    init_model,
    kl_loss,
    param_bytes,
    sgd_step,
    unflatten_params,
)

log = logging.getLogger(__name__)

ALGORITHMS = ("ktpfl", "simpfl", "topkpfl", "fedmd", "feddf", "pfeddf", "fedavg", "local", "ktpfl_homogeneous")
PAYLOAD_KINDS = ("soft_prediction", "parameters", "coefficients")

# stream tags for seeded sub-generators
_INIT, _LOCAL, _DISTILL, _SERVER, _PUBLIC, _SAMPLE, _PROTO = range(1, 8)


def _subseed(*key: int) -> int:
    return int(np.random.SeedSequence(list(key)).generate_state(1)[0])


@dataclass(frozen=True)
class FedHyper:
    local_epochs: int = 20
    distill_steps: int = 1
    batch_size: int = 128
    public_batch_size: int = 256
    lr_local: float = 0.01
    lr_distill: float = 0.01
    knowledge: KnowledgeHyper = field(default_factory=KnowledgeHyper)
    public_size: Optional[int] = None  # samples of the public pool used per round; None = all
    sample_rate: float = 1.0
    normalize_coefficients: bool = True
    public_resample_each_round: bool = False
    finetune_epochs: Optional[int] = None  # pFedDF; defaults to local_epochs
    workers: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.local_epochs < 0 or self.distill_steps < 0:
            raise ConfigError("local_epochs and distill_steps must be >= 0")
        if self.batch_size < 1 or self.public_batch_size < 1:
            raise ConfigError("batch sizes must be >= 1")
        if self.lr_local < 0 or self.lr_distill < 0:
            raise ConfigError("learning rates must be >= 0")
        if not 0 < self.sample_rate <= 1:
            raise ConfigError(f"sample_rate must lie in (0, 1], got {self.sample_rate}", key="sample_rate")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1", key="workers")


@dataclass(frozen=True)
class ClientState:
    id: int
    model: Model
    train_idx: np.ndarray
    test_idx: np.ndarray
    group: int = 0  # architecture group

    @property
    def size(self) -> int:
        return len(self.train_idx)


@dataclass(frozen=True)
class CommsEntry:
    round: int
    client: int
    direction: str  # "up" | "down"
    kind: str
    nbytes: int


class CommsLedger:
    """Append-only record of every simulated message."""

    def __init__(self):
        self._entries: list[CommsEntry] = []
        self._per_client: dict[tuple[int, int], list[int]] = {}

    def record(self, round: int, client: int, direction: str, kind: str, nbytes: int) -> None:
        if direction not in ("up", "down"):
            raise ValueError(f"direction must be 'up' or 'down', got {direction!r}")
        if kind not in PAYLOAD_KINDS:
            raise ValueError(f"unknown payload kind {kind!r}")
        self._entries.append(CommsEntry(round, client, direction, kind, int(nbytes)))
        slot = self._per_client.setdefault((round, client), [0, 0])
        slot[0 if direction == "up" else 1] += int(nbytes)

    @property
    def entries(self) -> tuple[CommsEntry, ...]:
        return tuple(self._entries)

    def client_round(self, round: int, client: int) -> tuple[int, int]:
        up, down = self._per_client.get((round, client), (0, 0))
        return up, down

    def totals_by_kind(self) -> dict[str, int]:
        totals = {k: 0 for k in PAYLOAD_KINDS}
        for e in self._entries:
            totals[e.kind] += e.nbytes
        return totals

    def total(self, direction: Optional[str] = None, round: Optional[int] = None) -> int:
        return sum(e.nbytes for e in self._entries
                   if (direction is None or e.direction == direction) and (round is None or e.round == round))


def account_comms(ledger: CommsLedger, round: int, payloads: Iterable[tuple[int, str, str, int]]) -> CommsLedger:
    for client, direction, kind, nbytes in payloads:
        ledger.record(round, client, direction, kind, nbytes)
    return ledger


def soft_prediction_bytes(num_samples: int, num_classes: int) -> int:
    return num_samples * num_classes * BYTES_PER_VALUE


def coefficient_bytes(num_clients: int) -> int:
    return num_clients * BYTES_PER_VALUE


@dataclass
class ServerState:
    algorithm: str
    c: np.ndarray
    round: int = 0
    ledger: CommsLedger = field(default_factory=CommsLedger)
    global_model: Optional[Model] = None  # fedavg
    prototypes: dict[int, Model] = field(default_factory=dict)  # feddf / pfeddf, keyed by group


@dataclass(frozen=True)
class RoundMetrics:
    round: int
    test_acc: tuple[float, ...]
    private_loss: tuple[float, ...]
    distill_loss: tuple[float, ...]
    up_bytes: tuple[int, ...]
    down_bytes: tuple[int, ...]

    @property
    def avg_accuracy(self) -> float:
        return float(np.mean(self.test_acc))

    @property
    def avg_private_loss(self) -> float:
        return float(np.mean(self.private_loss))

    @property
    def avg_distill_loss(self) -> float:
        return float(np.mean(self.distill_loss))


@dataclass(frozen=True)
class Federation:
    """Immutable run context: data, partition, public pool and hyperparameters."""

    data: Dataset
    partition: Partition
    public_pool: Dataset
    hyper: FedHyper

    @property
    def num_clients(self) -> int:
        return self.partition.num_clients

    @property
    def num_classes(self) -> int:
        return self.data.num_classes

    @property
    def client_weights(self) -> np.ndarray:
        sizes = self.partition.sizes.astype(np.float64)
        return sizes / sizes.sum()

    def public_round(self, round: int) -> tuple[np.ndarray, np.ndarray]:
        """Indices into the public pool and their inputs for one round."""
        pool = len(self.public_pool)
        size = pool if self.hyper.public_size is None else self.hyper.public_size
        if size > pool:
            raise ConfigError(f"public size {size} exceeds the public pool of {pool}", key="public.size")
        if self.hyper.public_resample_each_round:
            idx = np.sort(np.random.default_rng([self.hyper.seed, _PUBLIC, round]).choice(pool, size, replace=False))
        else:
            idx = np.arange(size)
        return idx, self.public_pool.inputs[idx]


# ---------------------------------------------------------------- setup

def init_clients(fed: Federation, architectures: Sequence[Sequence[int]], groups: Optional[Sequence[int]] = None) -> list[ClientState]:
    """One self-initialised model per client; ``architectures[n]`` lists hidden widths."""
    N = fed.num_clients
    if len(architectures) != N:
        raise ConfigError(f"{len(architectures)} architectures for {N} clients")
    groups = list(range(N)) if groups is None else list(groups)
    clients = []
    for n in range(N):
        sizes = [fed.data.d_in, *architectures[n], fed.num_classes]
        rng = np.random.default_rng([fed.hyper.seed, _INIT, n])
        clients.append(ClientState(n, init_model(sizes, rng), fed.partition.private[n], fed.partition.test[n], groups[n]))
    return clients


def _require_homogeneous(clients: Sequence[ClientState], algorithm: str) -> None:
    archs = {c.model.architecture() for c in clients}
    if len(archs) != 1:
        raise ConfigError(f"{algorithm} requires every client to share one architecture, found {len(archs)}",
                          key="model_groups")


def init_server(fed: Federation, algorithm: str, clients: Sequence[ClientState]) -> ServerState:
    if algorithm not in ALGORITHMS:
        raise ConfigError(f"unknown algorithm {algorithm!r}", key="algorithm")
    server = ServerState(algorithm=algorithm, c=uniform_coefficients(fed.num_clients))
    if algorithm in ("fedavg", "ktpfl_homogeneous"):
        _require_homogeneous(clients, algorithm)
    if algorithm == "fedavg":
        template = clients[0].model
        sizes = [template.in_dim] + [l.weights.shape[1] for l in template.layers]
        server.global_model = init_model(sizes, np.random.default_rng([fed.hyper.seed, _PROTO, 0]))
    if algorithm in ("feddf", "pfeddf"):
        for c in clients:
            if c.group not in server.prototypes:
                sizes = [c.model.in_dim] + [l.weights.shape[1] for l in c.model.layers]
                server.prototypes[c.group] = init_model(sizes, np.random.default_rng([fed.hyper.seed, _PROTO, c.group]))
            elif server.prototypes[c.group].architecture() != c.model.architecture():
                raise ConfigError(f"group {c.group} mixes architectures", key="model_groups")
    return server


# ---------------------------------------------------------------- client-side steps

def client_local_update(client: ClientState, data: Dataset, epochs: int, batch_size: int, lr: float,
                        seed: int, round: int = 0, model: Optional[Model] = None) -> Model:
    """``epochs`` passes of mini-batch SGD on cross-entropy over the private shard."""
    if client.size == 0:
        raise ConfigError("client has an empty private shard", key=f"client {client.id}")
    model = client.model if model is None else model
    stream = _subseed(seed, _LOCAL, client.id)
    for e in range(epochs):
        for idx in batches(client.train_idx, batch_size, stream, round * max(epochs, 1) + e):
            model = sgd_step(model, grad_ce(model, data.inputs[idx], data.labels[idx]), lr)
    return model


def client_distill(model: Model, public_x: np.ndarray, teacher: np.ndarray, steps: int, batch_size: int,
                   lr: float, T: float, seed: int, client_id: int = 0, round: int = 0,
                   check: bool = True) -> tuple[Model, float]:
    """``steps`` passes over the public batch, descending KL(teacher || student).

    Returns the updated model and its KL to the teacher afterwards.
    """
    if teacher.shape[0] != public_x.shape[0]:
        raise ProtocolError(f"teacher has {teacher.shape[0]} rows for {public_x.shape[0]} public samples", client=client_id)
    if public_x.shape[0] == 0:
        return model, 0.0
    stream = _subseed(seed, _DISTILL, client_id)
    rows = np.arange(public_x.shape[0])
    for j in range(steps):
        for idx in batches(rows, batch_size, stream, round * max(steps, 1) + j):
            model = sgd_step(model, grad_kl_student(model, public_x[idx], teacher[idx], T, check=check), lr)
    return model, kl_loss(model, public_x, teacher, T, check=check)


def sample_clients(num_clients: int, rate: float, round: int, seed: int) -> list[int]:
    if not 0 < rate <= 1:
        raise ConfigError(f"sample_rate must lie in (0, 1], got {rate}", key="sample_rate")
    if rate == 1:
        return list(range(num_clients))
    k = max(1, math.ceil(rate * num_clients - 1e-9))
    chosen = np.random.default_rng([seed, _SAMPLE, round]).choice(num_clients, size=k, replace=False)
    return sorted(int(n) for n in chosen)


def _fan_out(fed: Federation, fn: Callable[[int], object], ids: Sequence[int]) -> list:
    def call(n):
        try:
            return fn(n)
        except (ConfigError, ProtocolError):
            raise
        except Exception as exc:
            raise ProtocolError(f"update failed: {exc}", client=n) from exc

    if fed.hyper.workers <= 1 or len(ids) <= 1:
        return [call(n) for n in ids]
    with ThreadPoolExecutor(max_workers=fed.hyper.workers) as pool:
        return list(pool.map(call, ids))


def evaluate(fed: Federation, clients: Sequence[ClientState]) -> tuple[np.ndarray, np.ndarray]:
    acc = np.array([accuracy(c.model, fed.data.inputs[c.test_idx], fed.data.labels[c.test_idx]) for c in clients])
    loss = np.array([ce_loss(c.model, fed.data.inputs[c.train_idx], fed.data.labels[c.train_idx]) for c in clients])
    return acc, loss


def _finish(fed: Federation, server: ServerState, clients: list[ClientState],
            distill: dict[int, float]) -> tuple[ServerState, list[ClientState], RoundMetrics]:
    t = server.round
    acc, loss = evaluate(fed, clients)
    comms = [server.ledger.client_round(t, c.id) for c in clients]
    metrics = RoundMetrics(
        round=t,
        test_acc=tuple(float(a) for a in acc),
        private_loss=tuple(float(l) for l in loss),
        distill_loss=tuple(float(distill.get(c.id, 0.0)) for c in clients),
        up_bytes=tuple(u for u, _ in comms),
        down_bytes=tuple(d for _, d in comms),
    )
    return server, clients, metrics


def _local_phase(fed: Federation, clients: list[ClientState], members: Sequence[int], t: int,
                 start: Optional[dict[int, Model]] = None) -> dict[int, Model]:
    hp = fed.hyper

    def work(n):
        init = None if start is None else start[n]
        return client_local_update(clients[n], fed.data, hp.local_epochs, hp.batch_size, hp.lr_local, hp.seed, t, init)

    return dict(zip(members, _fan_out(fed, work, members)))


def _distill_phase(fed: Federation, models: dict[int, Model], public_x: np.ndarray,
                   teachers: dict[int, np.ndarray], t: int) -> dict[int, tuple[Model, float]]:
    hp, kh = fed.hyper, fed.hyper.knowledge
    members = sorted(teachers)

    def work(n):
        # lambda scales the distillation term, folded into the step size
        return client_distill(models[n], public_x, teachers[n], hp.distill_steps, hp.public_batch_size,
                              hp.lr_distill * kh.lam, kh.T, hp.seed, n, t, check=hp.normalize_coefficients)

    return dict(zip(members, _fan_out(fed, work, members)))


# ---------------------------------------------------------------- KT-pFL and its similarity variants

def run_round_ktpfl(fed: Federation, server: ServerState, clients: list[ClientState],
                    policy: str = "learned") -> tuple[ServerState, list[ClientState], RoundMetrics]:
    """One round: local training, soft-prediction upload, personalized teachers,
    distillation, then the coefficient update with models held fixed.

    ``policy`` selects how teachers are weighted: "learned" (KT-pFL), "cosine"
    (Sim-pFL) or "topk" (TopK-pFL).
    """
    hp, kh = fed.hyper, fed.hyper.knowledge
    N = fed.num_clients
    server.round += 1
    t = server.round
    members = sample_clients(N, hp.sample_rate, t, hp.seed)
    partial = len(members) < N
    pub_idx, pub_x = fed.public_round(t)

    def local(n):
        model = client_local_update(clients[n], fed.data, hp.local_epochs, hp.batch_size, hp.lr_local, hp.seed, t)
        return model, soft_predict(model, pub_x, kh.T)

    results = dict(zip(members, _fan_out(fed, local, members)))
    bank = SoftPredictionBank({n: results[n][1] for n in members}, pub_idx)
    msg = soft_prediction_bytes(len(pub_idx), fed.num_classes)
    account_comms(server.ledger, t, [(n, "up", "soft_prediction", msg) for n in members])

    if policy == "learned":
        weights = server.c
    elif policy == "cosine":
        weights = embed_block(cosine_coefficients(bank, members), members, N)
    elif policy == "topk":
        weights = embed_block(topk_coefficients(bank, min(kh.K, len(members)), members), members, N)
    else:
        raise ConfigError(f"unknown teacher policy {policy!r}")
    teachers = {n: ensemble_teacher(bank, weights, n, members if partial else None) for n in members}
    account_comms(server.ledger, t, [(n, "down", "soft_prediction", msg) for n in members])

    distilled = _distill_phase(fed, {n: results[n][0] for n in members}, pub_x, teachers, t)
    for n in members:
        clients[n] = replace(clients[n], model=distilled[n][0])

    if policy == "learned":
        block = members if partial else None
        g = coeff_gradient(bank, server.c, fed.client_weights, kh, block)
        server.c = coeff_update(server.c, g, kh.eta3, hp.normalize_coefficients, block)
        account_comms(server.ledger, t, [(n, "down", "coefficients", coefficient_bytes(N)) for n in members])
    else:
        server.c = weights
    return _finish(fed, server, clients, {n: distilled[n][1] for n in members})


def run_round_simpfl(fed, server, clients):
    return run_round_ktpfl(fed, server, clients, policy="cosine")


def run_round_topkpfl(fed, server, clients):
    return run_round_ktpfl(fed, server, clients, policy="topk")


# ---------------------------------------------------------------- baselines

def run_round_fedmd(fed: Federation, server: ServerState, clients: list[ClientState]):
    """Every client distills toward the plain average of all uploaded soft predictions."""
    hp, kh = fed.hyper, fed.hyper.knowledge
    server.round += 1
    t = server.round
    members = sample_clients(fed.num_clients, hp.sample_rate, t, hp.seed)
    _, pub_x = fed.public_round(t)
    models = _local_phase(fed, clients, members, t)
    preds = [soft_predict(models[n], pub_x, kh.T) for n in members]
    consensus = np.mean(preds, axis=0) if preds else np.zeros((0, fed.num_classes))
    msg = soft_prediction_bytes(pub_x.shape[0], fed.num_classes)
    account_comms(server.ledger, t, [(n, d, "soft_prediction", msg) for n in members for d in ("up", "down")])
    distilled = _distill_phase(fed, models, pub_x, {n: consensus for n in members}, t)
    for n in members:
        clients[n] = replace(clients[n], model=distilled[n][0])
    return _finish(fed, server, clients, {n: distilled[n][1] for n in members})


def weighted_average(models: Sequence[Model], weights: Sequence[float]) -> Model:
    """sum_n w_n * params_n over flattened parameter vectors."""
    archs = {m.architecture() for m in models}
    if len(archs) != 1:
        raise ConfigError("cannot average models with different architectures", key="model_groups")
    w = np.asarray(weights, dtype=np.float64)
    stacked = np.stack([flatten_params(m) for m in models])
    return unflatten_params(models[0], w @ stacked)


def fedavg_aggregate(models: Sequence[Model], sizes: Sequence[int]) -> Model:
    sizes = np.asarray(sizes, dtype=np.float64)
    return weighted_average(models, sizes / sizes.sum())


def run_round_fedavg(fed: Federation, server: ServerState, clients: list[ClientState]):
    hp = fed.hyper
    _require_homogeneous(clients, "fedavg")
    server.round += 1
    t = server.round
    members = sample_clients(fed.num_clients, hp.sample_rate, t, hp.seed)
    nbytes = param_bytes(server.global_model)
    account_comms(server.ledger, t, [(n, "down", "parameters", nbytes) for n in members])
    models = _local_phase(fed, clients, members, t, start={n: server.global_model for n in members})
    account_comms(server.ledger, t, [(n, "up", "parameters", nbytes) for n in members])
    server.global_model = fedavg_aggregate([models[n] for n in members], [clients[n].size for n in members])
    clients = [replace(c, model=server.global_model) for c in clients]
    return _finish(fed, server, clients, {})


def run_round_feddf(fed: Federation, server: ServerState, clients: list[ClientState]):
    """Per-architecture averaging, then each prototype is distilled on the server
    toward the average soft prediction of all received client models."""
    hp, kh = fed.hyper, fed.hyper.knowledge
    server.round += 1
    t = server.round
    members = sample_clients(fed.num_clients, hp.sample_rate, t, hp.seed)
    _, pub_x = fed.public_round(t)
    account_comms(server.ledger, t, [(n, "down", "parameters", param_bytes(server.prototypes[clients[n].group]))
                                     for n in members])
    models = _local_phase(fed, clients, members, t, start={n: server.prototypes[clients[n].group] for n in members})
    account_comms(server.ledger, t, [(n, "up", "parameters", param_bytes(models[n])) for n in members])

    for g in sorted({clients[n].group for n in members}):
        ids = [n for n in members if clients[n].group == g]
        server.prototypes[g] = fedavg_aggregate([models[n] for n in ids], [clients[n].size for n in ids])
    preds = [soft_predict(models[n], pub_x, kh.T) for n in members]
    consensus = np.mean(preds, axis=0) if preds else np.zeros((0, fed.num_classes))
    for g in sorted(server.prototypes):
        server.prototypes[g], _ = client_distill(server.prototypes[g], pub_x, consensus, hp.distill_steps,
                                                 hp.public_batch_size, hp.lr_distill * kh.lam, kh.T,
                                                 _subseed(hp.seed, _SERVER), g, t)
    clients = [replace(c, model=server.prototypes[c.group]) for c in clients]
    return _finish(fed, server, clients, {})


def pfeddf_finetune(fed: Federation, server: ServerState, clients: list[ClientState]):
    """Each client fine-tunes its fused prototype on private data; re-evaluates the round."""
    hp = fed.hyper
    epochs = hp.local_epochs if hp.finetune_epochs is None else hp.finetune_epochs
    ids = [c.id for c in clients]

    def work(n):
        c = replace(clients[n], model=server.prototypes[clients[n].group])
        return client_local_update(c, fed.data, epochs, hp.batch_size, hp.lr_local, hp.seed + 1, server.round)

    tuned = _fan_out(fed, work, ids)
    clients = [replace(c, model=m) for c, m in zip(clients, tuned)]
    return _finish(fed, server, clients, {})


def run_round_local(fed: Federation, server: ServerState, clients: list[ClientState]):
    server.round += 1
    t = server.round
    members = sample_clients(fed.num_clients, fed.hyper.sample_rate, t, fed.hyper.seed)
    models = _local_phase(fed, clients, members, t)
    for n in members:
        clients[n] = replace(clients[n], model=models[n])
    return _finish(fed, server, clients, {})


def run_round_homogeneous_ktpfl(fed: Federation, server: ServerState, clients: list[ClientState]):
    """Shared-architecture KT-pFL: the server keeps one personalized model per client,
    w_n <- sum_m c[m, n] w_m, and learns c from soft predictions on public data."""
    hp, kh = fed.hyper, fed.hyper.knowledge
    _require_homogeneous(clients, "ktpfl_homogeneous")
    N = fed.num_clients
    server.round += 1
    t = server.round
    members = sample_clients(N, hp.sample_rate, t, hp.seed)
    partial = len(members) < N
    pub_idx, pub_x = fed.public_round(t)
    models = _local_phase(fed, clients, members, t)
    bank = SoftPredictionBank({n: soft_predict(models[n], pub_x, kh.T) for n in members}, pub_idx)
    nbytes = param_bytes(clients[0].model)
    msg = soft_prediction_bytes(len(pub_idx), fed.num_classes)
    account_comms(server.ledger, t, [(n, "up", kind, b) for n in members
                                     for kind, b in (("parameters", nbytes), ("soft_prediction", msg))])

    block = members if partial else None
    g = coeff_gradient(bank, server.c, fed.client_weights, kh, block)
    server.c = coeff_update(server.c, g, kh.eta3, hp.normalize_coefficients, block)

    stacked = [models[m] for m in members]
    for n in members:
        w = server.c[members, n]
        if partial:
            w = w / w.sum() if w.sum() > 0 else np.full(len(members), 1.0 / len(members))
        clients[n] = replace(clients[n], model=weighted_average(stacked, w))
    account_comms(server.ledger, t, [(n, "down", "parameters", nbytes) for n in members])
    return _finish(fed, server, clients, {})


ROUND_RUNNERS: dict[str, Callable] = {
    "ktpfl": run_round_ktpfl,
    "simpfl": run_round_simpfl,
    "topkpfl": run_round_topkpfl,
    "fedmd": run_round_fedmd,
    "feddf": run_round_feddf,
    "pfeddf": run_round_feddf,
    "fedavg": run_round_fedavg,
    "local": run_round_local,
    "ktpfl_homogeneous": run_round_homogeneous_ktpfl,
}


def simulate(fed: Federation, server: ServerState, clients: list[ClientState], rounds: int,
             on_round: Optional[Callable[[ServerState, list[ClientState], RoundMetrics], None]] = None):
    """Run ``rounds`` rounds of ``server.algorithm``; returns (server, clients, history)."""
    runner = ROUND_RUNNERS[server.algorithm]
    history: list[RoundMetrics] = []
    clients = list(clients)
    for r in range(rounds):
        try:
            server, clients, metrics = runner(fed, server, clients)
            if server.algorithm == "pfeddf" and r == rounds - 1:
                server, clients, metrics = pfeddf_finetune(fed, server, clients)
        except KtpflError:
            raise
        except Exception as exc:
            raise ProtocolError(f"round {server.round} aborted: {exc}") from exc
        history.append(metrics)
        log.debug("round %d %s avg acc %.4f", metrics.round, server.algorithm, metrics.avg_accuracy)
        if on_round is not None:
            on_round(server, clients, metrics)
    return server, clients, history
