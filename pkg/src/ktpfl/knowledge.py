"""Soft predictions, personalized ensemble teachers and the knowledge-coefficient matrix.

Convention: ``c[m, n]`` is the contribution of client m to client n's teacher,
so client n's teacher mixes column n. A column-stochastic ``c`` therefore
yields row-stochastic teachers.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import ConfigError, DimensionError, NumericError, ParameterError, ProtocolError
from .nn import KL_EPS, Model, check_stochastic, forward, softmax_t


@dataclass(frozen=True)
class KnowledgeHyper:
    lam: float = 1.0
    rho: float = 0.5
    T: float = 1.0
    eta3: float = 0.01
    K: int = 5
    eps: float = KL_EPS

    def __post_init__(self):
        if self.lam < 0:
            raise ParameterError(f"lambda must be >= 0, got {self.lam}")
        if self.rho < 0:
            raise ParameterError(f"rho must be >= 0, got {self.rho}")
        if not self.T > 0:
            raise ParameterError(f"temperature must be > 0, got {self.T}")
        if self.eta3 < 0:
            raise ParameterError(f"eta3 must be >= 0, got {self.eta3}")
        if self.K < 1:
            raise ParameterError(f"K must be >= 1, got {self.K}")


@dataclass(frozen=True)
class SoftPredictionBank:
    """Per-client soft predictions on one shared public batch."""

    predictions: Mapping[int, np.ndarray]
    indices: np.ndarray

    def __post_init__(self):
        shapes = {p.shape for p in self.predictions.values()}
        if len(shapes) > 1:
            raise DimensionError(f"bank entries disagree on shape: {sorted(shapes)}")
        for n, p in self.predictions.items():
            if p.shape[0] != len(self.indices):
                raise DimensionError(f"client {n}: {p.shape[0]} rows for {len(self.indices)} public samples")

    @property
    def clients(self) -> list[int]:
        return sorted(self.predictions)

    def get(self, n: int) -> np.ndarray:
        try:
            return self.predictions[n]
        except KeyError:
            raise ProtocolError("no soft prediction in the bank", client=n) from None

    def stack(self, members: Optional[Sequence[int]] = None) -> np.ndarray:
        members = self.clients if members is None else members
        return np.stack([self.get(m) for m in members])


def soft_predict(model: Model, public_batch: np.ndarray, T: float) -> np.ndarray:
    return softmax_t(forward(model, public_batch), T)


def uniform_coefficients(N: int) -> np.ndarray:
    return np.full((N, N), 1.0 / N)


def _members(c: np.ndarray, members: Optional[Sequence[int]]) -> tuple[list[int], bool]:
    N = c.shape[0]
    if c.shape != (N, N):
        raise DimensionError(f"coefficient matrix must be square, got {c.shape}")
    if members is None:
        return list(range(N)), True
    members = sorted(int(m) for m in members)
    return members, len(members) == N


def _column_weights(c: np.ndarray, n: int, members: list[int], full: bool) -> np.ndarray:
    w = c[members, n]
    if full:
        return w
    # partial participation: mix the participating clients only, keeping their relative weights
    mass = w.sum()
    return w / mass if mass > 0 else np.full(len(members), 1.0 / len(members))


def ensemble_teacher(bank: SoftPredictionBank, c: np.ndarray, n: int,
                     members: Optional[Sequence[int]] = None) -> np.ndarray:
    """Personalized teacher of client n: sum over members m of c[m, n] * S_m."""
    members, full = _members(c, members)
    weights = _column_weights(c, n, members, full)
    teacher = None
    for m, w in zip(members, weights):
        term = w * bank.get(m)
        teacher = term if teacher is None else teacher + term
    return teacher


def coeff_objective(bank: SoftPredictionBank, c: np.ndarray, client_weights: np.ndarray,
                    hyper: KnowledgeHyper, members: Optional[Sequence[int]] = None) -> float:
    """sum_n (D_n/D) * lam * KL(p_n || S_n) + rho * ||c - 1/N||^2 over the participating block."""
    members, full = _members(c, members)
    N = c.shape[0]
    total = 0.0
    for n in members:
        p = ensemble_teacher(bank, c, n, members if not full else None)
        s = bank.get(n)
        kl = (p * (np.log(np.maximum(p, hyper.eps)) - np.log(np.maximum(s, hyper.eps)))).sum(axis=1).mean()
        total += client_weights[n] * hyper.lam * kl
    block = c[np.ix_(members, members)]
    return float(total + hyper.rho * ((block - 1.0 / N) ** 2).sum())


def coeff_gradient(bank: SoftPredictionBank, c: np.ndarray, client_weights: np.ndarray,
                   hyper: KnowledgeHyper, members: Optional[Sequence[int]] = None) -> np.ndarray:
    """Gradient of :func:`coeff_objective` w.r.t. c, with model parameters held fixed.

    g[m, n] = lam * (D_n/D) * mean_b sum_k S_m (log p_n + 1 - log S_n) + 2 rho (c[m, n] - 1/N).
    Entries outside the participating block are zero. Under partial participation
    each teacher column is rescaled by its block mass, which is held constant.
    """
    members, full = _members(c, members)
    N = c.shape[0]
    eps = hyper.eps
    S = bank.stack(members)  # [|members|, B, C]
    B = S.shape[1]
    g = np.zeros_like(c, dtype=np.float64)
    if B == 0:
        return g
    for j, n in enumerate(members):
        weights = _column_weights(c, n, members, full)
        p = np.tensordot(weights, S, axes=1)
        # clamped entries of p contribute log(eps) and no "+1" (derivative of a constant)
        dlog = np.where(p > eps, np.log(np.maximum(p, eps)) + 1.0, np.log(eps)) - np.log(np.maximum(S[j], eps))
        kl_grad = np.einsum("mbk,bk->m", S, dlog) / B
        if not full:
            mass = c[members, n].sum()
            kl_grad = kl_grad / mass if mass > 0 else kl_grad
        g[members, n] = hyper.lam * client_weights[n] * kl_grad
    block = np.ix_(members, members)
    g[block] += 2.0 * hyper.rho * (c[block] - 1.0 / N)
    if not np.all(np.isfinite(g)):
        raise NumericError("non-finite coefficient gradient")
    return g


def normalize_columns(c: np.ndarray) -> np.ndarray:
    """Clamp to >= 0 and rescale each column to sum to 1; all-zero columns become uniform."""
    out = np.maximum(np.asarray(c, dtype=np.float64), 0.0)
    N = out.shape[0]
    sums = out.sum(axis=0)
    zero = sums <= 0
    out[:, zero] = 1.0 / N
    out[:, ~zero] /= sums[~zero]
    return out


def coeff_update(c: np.ndarray, g: np.ndarray, eta3: float, normalize: bool = True,
                 members: Optional[Sequence[int]] = None) -> np.ndarray:
    """c <- c - eta3 * g, then optional simplex repair.

    Under partial participation only the participating block moves, and each of
    its columns is rescaled back to the block mass it had before the step, so
    entries outside the block are untouched and columns still sum to one.
    """
    members, full = _members(c, members)
    new = np.array(c, dtype=np.float64)
    block = np.ix_(members, members)
    new[block] = c[block] - eta3 * g[block]
    if not normalize:
        return new
    if full:
        return normalize_columns(new)
    sub = np.maximum(new[block], 0.0)
    mass = c[block].sum(axis=0)
    sums = sub.sum(axis=0)
    for j in range(len(members)):
        sub[:, j] = sub[:, j] * (mass[j] / sums[j]) if sums[j] > 0 else mass[j] / len(members)
    new[block] = sub
    return new


def cosine_similarity_matrix(bank: SoftPredictionBank, members: Optional[Sequence[int]] = None) -> np.ndarray:
    """Raw cosine similarity between flattened prediction matrices, in member order."""
    S = bank.stack(members)
    flat = S.reshape(S.shape[0], -1)
    norms = np.linalg.norm(flat, axis=1)
    if np.any(norms == 0):
        raise NumericError("zero-norm soft prediction")
    return (flat @ flat.T) / np.outer(norms, norms)


def cosine_coefficients(bank: SoftPredictionBank, members: Optional[Sequence[int]] = None) -> np.ndarray:
    return normalize_columns(np.maximum(cosine_similarity_matrix(bank, members), 0.0))


def topk_coefficients(bank: SoftPredictionBank, K: int, members: Optional[Sequence[int]] = None) -> np.ndarray:
    sim = np.maximum(cosine_similarity_matrix(bank, members), 0.0)
    N = sim.shape[0]
    if not 1 <= K <= N:
        raise ConfigError(f"top-K needs 1 <= K <= {N}, got {K}", key="top_k")
    keep = np.zeros_like(sim)
    for n in range(N):
        # self is always kept; the rest by similarity, ties to the lower index
        order = [n] + sorted((m for m in range(N) if m != n), key=lambda m: (-sim[m, n], m))
        chosen = order[:K]
        keep[chosen, n] = sim[chosen, n]
    return normalize_columns(keep)


def embed_block(block: np.ndarray, members: Sequence[int], N: int) -> np.ndarray:
    """Place a |members| x |members| matrix into an N x N zero matrix."""
    full = np.zeros((N, N))
    full[np.ix_(list(members), list(members))] = block
    return full


def within_cross_mass(c: np.ndarray, cluster_of: Sequence[int], include_self: bool = False) -> tuple[float, float]:
    """Mean coefficient between same-cluster pairs and between cross-cluster pairs."""
    cluster_of = np.asarray(cluster_of)
    same = cluster_of[:, None] == cluster_of[None, :]
    if not include_self:
        same = same & ~np.eye(len(cluster_of), dtype=bool)
    cross = cluster_of[:, None] != cluster_of[None, :]
    return float(c[same].mean()), float(c[cross].mean())


def write_coefficients_csv(path, c: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for row in c:
            writer.writerow([f"{v:.9g}" for v in row])


def read_coefficients_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        return np.array([[float(v) for v in row] for row in csv.reader(fh)])


def check_column_stochastic(c: np.ndarray, tol: float = 1e-9) -> None:
    check_stochastic(np.asarray(c).T, "coefficient column", tol)
