"""Dense networks with hand-written backprop.

Tensors are plain float64 numpy arrays. A model is an ordered stack of
dense layers; hidden layers use ReLU and the last layer emits logits.
Every function here is pure: parameters are never mutated in place.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DataError, DimensionError, NumericError, ParameterError

BYTES_PER_VALUE = 4  # wire payloads are accounted as float32
KL_EPS = 1e-12
ACTIVATIONS = ("relu", "none")


@dataclass(frozen=True)
class Layer:
    weights: np.ndarray  # [in x out]
    bias: np.ndarray  # [out]
    activation: str = "none"

    @property
    def shape(self) -> tuple[int, int]:
        return self.weights.shape


@dataclass(frozen=True)
class Model:
    layers: tuple[Layer, ...]

    def __post_init__(self):
        if not self.layers:
            raise DimensionError("model needs at least one layer")
        for k, layer in enumerate(self.layers):
            if layer.weights.ndim != 2 or layer.bias.shape != (layer.weights.shape[1],):
                raise DimensionError(f"layer {k}: weights {layer.weights.shape} / bias {layer.bias.shape} do not match")
            if layer.activation not in ACTIVATIONS:
                raise ParameterError(f"layer {k}: unknown activation {layer.activation!r}")
            if k > 0 and self.layers[k - 1].weights.shape[1] != layer.weights.shape[0]:
                raise DimensionError(
                    f"layer {k}: input dim {layer.weights.shape[0]} != previous output {self.layers[k - 1].weights.shape[1]}"
                )
        if self.layers[-1].activation != "none":
            raise ParameterError("final layer must produce logits (activation 'none')")

    @property
    def in_dim(self) -> int:
        return self.layers[0].weights.shape[0]

    @property
    def out_dim(self) -> int:
        return self.layers[-1].weights.shape[1]

    def architecture(self) -> tuple[tuple[int, int, str], ...]:
        return tuple((*layer.shape, layer.activation) for layer in self.layers)


# One (dW, db) pair per layer, mirroring Model.layers.
GradientSet = tuple[tuple[np.ndarray, np.ndarray], ...]


def init_model(sizes: Sequence[int], rng: np.random.Generator) -> Model:
    """Glorot-uniform weights, zero biases. ``sizes`` = [d_in, hidden..., C]."""
    if len(sizes) < 2 or any(s < 1 for s in sizes):
        raise ParameterError(f"invalid layer sizes {list(sizes)}")
    layers = []
    for k, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        act = "none" if k == len(sizes) - 2 else "relu"
        layers.append(Layer(w, np.zeros(fan_out), act))
    return Model(tuple(layers))


def _check_batch(model: Model, batch: np.ndarray) -> np.ndarray:
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2:
        raise DimensionError(f"batch must be 2-D, got shape {batch.shape}")
    if batch.shape[1] != model.in_dim:
        raise DimensionError(f"layer 0: expects {model.in_dim} input columns, batch has {batch.shape[1]}")
    return batch


def _forward_cache(model: Model, batch: np.ndarray):
    acts = [batch]
    pre = []
    h = batch
    for layer in model.layers:
        z = h @ layer.weights + layer.bias
        pre.append(z)
        h = np.maximum(z, 0.0) if layer.activation == "relu" else z
        acts.append(h)
    return acts, pre


def _backward(model: Model, acts, pre, dlogits: np.ndarray) -> GradientSet:
    grads = []
    delta = dlogits
    for k in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[k]
        if layer.activation == "relu":
            delta = delta * (pre[k] > 0)
        grads.append((acts[k].T @ delta, delta.sum(axis=0)))
        if k > 0:
            delta = delta @ layer.weights.T
    return tuple(reversed(grads))


def forward(model: Model, batch: np.ndarray) -> np.ndarray:
    """Logits, one row per sample."""
    batch = _check_batch(model, batch)
    acts, _ = _forward_cache(model, batch)
    out = acts[-1]
    if not np.all(np.isfinite(out)):
        raise NumericError("non-finite logits")
    return out


def softmax_t(logits: np.ndarray, T: float = 1.0) -> np.ndarray:
    if not T > 0:
        raise ParameterError(f"temperature must be positive, got {T}")
    z = np.asarray(logits, dtype=np.float64) / T
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax_t(logits: np.ndarray, T: float = 1.0) -> np.ndarray:
    if not T > 0:
        raise ParameterError(f"temperature must be positive, got {T}")
    z = np.asarray(logits, dtype=np.float64) / T
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def _check_labels(labels, num_classes: int, rows: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.shape != (rows,):
        raise DimensionError(f"expected {rows} labels, got shape {labels.shape}")
    bad = np.flatnonzero((labels < 0) | (labels >= num_classes))
    if bad.size:
        i = int(bad[0])
        raise DataError(f"sample {i}: label {labels[i]} outside [0, {num_classes})")
    return labels.astype(np.int64)


def cross_entropy(logits: np.ndarray, labels) -> float:
    logits = np.asarray(logits, dtype=np.float64)
    labels = _check_labels(labels, logits.shape[1], logits.shape[0])
    logp = log_softmax_t(logits, 1.0)
    return float(-logp[np.arange(len(labels)), labels].mean())


def check_stochastic(p: np.ndarray, name: str, tol: float = 1e-6) -> None:
    sums = p.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > tol)
    if bad.size or np.any(p < -tol):
        row = int(bad[0]) if bad.size else int(np.argwhere(p < -tol)[0][0])
        raise DataError(f"{name} row {row} is not a probability distribution (sum={sums[row]:.9g})")


def kl_divergence(teacher: np.ndarray, student: np.ndarray, eps: float = KL_EPS, check: bool = True) -> float:
    """Batch-mean KL(teacher || student); both arguments are probability rows."""
    p = np.asarray(teacher, dtype=np.float64)
    q = np.asarray(student, dtype=np.float64)
    if p.shape != q.shape:
        raise DimensionError(f"teacher {p.shape} vs student {q.shape}")
    if check:
        check_stochastic(p, "teacher")
        check_stochastic(q, "student")
    pc = np.maximum(p, eps)
    qc = np.maximum(q, eps)
    return float((p * (np.log(pc) - np.log(qc))).sum(axis=1).mean())


def ce_loss(model: Model, batch, labels) -> float:
    return cross_entropy(forward(model, batch), labels)


def kl_loss(model: Model, batch, teacher, T: float, eps: float = KL_EPS, check: bool = True) -> float:
    return kl_divergence(teacher, softmax_t(forward(model, batch), T), eps=eps, check=check)


def grad_ce(model: Model, batch, labels) -> GradientSet:
    batch = _check_batch(model, batch)
    labels = _check_labels(labels, model.out_dim, batch.shape[0])
    acts, pre = _forward_cache(model, batch)
    d = softmax_t(acts[-1], 1.0)
    d[np.arange(len(labels)), labels] -= 1.0
    return _backward(model, acts, pre, d / batch.shape[0])


def grad_kl_student(model: Model, public_batch, teacher, T: float, check: bool = True) -> GradientSet:
    """Gradient of KL(teacher || softmax_t(model)) w.r.t. the student's parameters.

    The teacher is a constant. The student's logits are softened with the same T.
    """
    batch = _check_batch(model, public_batch)
    teacher = np.asarray(teacher, dtype=np.float64)
    if teacher.shape != (batch.shape[0], model.out_dim):
        raise DimensionError(f"teacher shape {teacher.shape} does not match batch ({batch.shape[0]}, {model.out_dim})")
    if check:
        check_stochastic(teacher, "teacher")
    if not T > 0:
        raise ParameterError(f"temperature must be positive, got {T}")
    acts, pre = _forward_cache(model, batch)
    q = softmax_t(acts[-1], T)
    # d/dz of -sum_k p_k log q_k; the row mass term keeps this exact for unnormalised teachers
    d = (q * teacher.sum(axis=1, keepdims=True) - teacher) / (T * batch.shape[0])
    return _backward(model, acts, pre, d)


def sgd_step(model: Model, grads: GradientSet, lr: float) -> Model:
    if lr < 0:
        raise ParameterError(f"learning rate must be non-negative, got {lr}")
    if len(grads) != len(model.layers):
        raise DimensionError(f"{len(grads)} gradient pairs for {len(model.layers)} layers")
    layers = []
    for k, (layer, (gw, gb)) in enumerate(zip(model.layers, grads)):
        if gw.shape != layer.weights.shape or gb.shape != layer.bias.shape:
            raise DimensionError(f"layer {k}: gradient shapes {gw.shape}/{gb.shape} do not mirror parameters")
        if lr == 0:
            layers.append(layer)
        else:
            layers.append(Layer(layer.weights - lr * gw, layer.bias - lr * gb, layer.activation))
    return Model(tuple(layers))


def param_count(model: Model) -> int:
    return sum(l.weights.size + l.bias.size for l in model.layers)


def param_bytes(model: Model) -> int:
    return param_count(model) * BYTES_PER_VALUE


def flatten_params(model: Model) -> np.ndarray:
    """Layer-order concatenation: W_0 (row-major), b_0, W_1, b_1, ..."""
    parts = []
    for layer in model.layers:
        parts.append(layer.weights.ravel())
        parts.append(layer.bias)
    return np.concatenate(parts)


def flatten_grads(grads: GradientSet) -> np.ndarray:
    return np.concatenate([a.ravel() for pair in grads for a in pair])


def unflatten_params(template: Model, vector: np.ndarray) -> Model:
    vector = np.asarray(vector, dtype=np.float64)
    if vector.shape != (param_count(template),):
        raise DimensionError(f"vector of length {vector.size} for a model with {param_count(template)} parameters")
    layers = []
    pos = 0
    for layer in template.layers:
        n_w = layer.weights.size
        w = vector[pos:pos + n_w].reshape(layer.weights.shape).copy()
        pos += n_w
        b = vector[pos:pos + layer.bias.size].copy()
        pos += layer.bias.size
        layers.append(Layer(w, b, layer.activation))
    return Model(tuple(layers))


def predict(model: Model, batch) -> np.ndarray:
    return forward(model, batch).argmax(axis=1)


def accuracy(model: Model, batch, labels) -> float:
    labels = np.asarray(labels)
    if labels.size == 0:
        return float("nan")
    return float((predict(model, batch) == labels).mean())
