"""Dataset ingestion, synthetic data, Non-IID partitioning and batching.

Every function takes an explicit seed and is deterministic given it.
"""

from __future__ import annotations

import hashlib
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigError, ConsistencyError, FormatError, LengthError, ParameterError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
TRAIN_FRACTION = 0.75


@dataclass(frozen=True)
class Dataset:
    inputs: np.ndarray  # [M x d_in], values in [0, 1]
    labels: Optional[np.ndarray]  # [M] ints, None for an unlabeled public set
    num_classes: int

    def __post_init__(self):
        if self.inputs.ndim != 2:
            raise ConsistencyError(f"inputs must be 2-D, got {self.inputs.shape}")
        if self.labels is not None:
            if self.labels.shape != (self.inputs.shape[0],):
                raise ConsistencyError(f"{self.inputs.shape[0]} inputs but {self.labels.shape[0]} labels")
            if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
                raise ConsistencyError(f"labels outside [0, {self.num_classes})")

    def __len__(self):
        return self.inputs.shape[0]

    @property
    def d_in(self) -> int:
        return self.inputs.shape[1]

    @property
    def labeled(self) -> bool:
        return self.labels is not None

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        labels = None if self.labels is None else self.labels[idx]
        return Dataset(self.inputs[idx], labels, self.num_classes)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.inputs).tobytes())
        if self.labels is not None:
            h.update(np.ascontiguousarray(self.labels, dtype=np.int64).tobytes())
        h.update(str(self.num_classes).encode())
        return h.hexdigest()[:16]


@dataclass(frozen=True)
class Partition:
    private: tuple[np.ndarray, ...]
    test: tuple[np.ndarray, ...]
    public: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    client_labels: tuple[tuple[int, ...], ...] = ()

    @property
    def num_clients(self) -> int:
        return len(self.private)

    @property
    def sizes(self) -> np.ndarray:
        return np.array([len(p) for p in self.private], dtype=np.int64)

    @property
    def total(self) -> int:
        return int(self.sizes.sum())


# ---------------------------------------------------------------- IDX files

def _read_idx(path, expected_magic: int, what: str) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise LengthError(f"{path}: {len(raw)} bytes, too short for an IDX header")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expected_magic:
        raise FormatError(f"{path}: magic 0x{magic:08x} is not the {what} magic 0x{expected_magic:08x}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise LengthError(f"{path}: header needs {header} bytes, file has {len(raw)}")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    expected = header + int(np.prod(dims))
    if len(raw) != expected:
        raise LengthError(f"{path}: expected {expected} bytes for dims {dims}, file has {len(raw)}")
    return np.frombuffer(raw, dtype=np.uint8, offset=header).reshape(dims)


def load_idx(images_path, labels_path, num_classes: Optional[int] = None) -> Dataset:
    images = _read_idx(images_path, IDX_IMAGES_MAGIC, "images")
    labels = _read_idx(labels_path, IDX_LABELS_MAGIC, "labels")
    if images.shape[0] != labels.shape[0]:
        raise ConsistencyError(f"{images.shape[0]} images but {labels.shape[0]} labels")
    inputs = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    labels = labels.astype(np.int64)
    if num_classes is None:
        num_classes = int(labels.max()) + 1 if labels.size else 0
    return Dataset(inputs, labels, num_classes)


def write_idx(ds: Dataset, images_path, labels_path, image_shape: Optional[tuple[int, int]] = None) -> None:
    """Write inputs (quantised to bytes) and labels in IDX format."""
    if ds.labels is None:
        raise ParameterError("cannot write an unlabeled dataset as IDX")
    rows, cols = image_shape or (1, ds.d_in)
    if rows * cols != ds.d_in:
        raise ParameterError(f"image shape {rows}x{cols} does not hold {ds.d_in} features")
    pixels = np.rint(np.clip(ds.inputs, 0.0, 1.0) * 255.0).astype(np.uint8)
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, len(ds), rows, cols))
        fh.write(pixels.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABELS_MAGIC, len(ds)))
        fh.write(ds.labels.astype(np.uint8).tobytes())


# ---------------------------------------------------------------- synthetic

def synth_gen(num_classes: int, samples_per_class: int, d_in: int, cluster_spread: float, seed: int) -> Dataset:
    """Isotropic Gaussian class clusters around seeded means, rescaled to [0, 1]."""
    if num_classes < 1 or samples_per_class < 1 or d_in < 1:
        raise ParameterError("num_classes, samples_per_class and d_in must be positive")
    if cluster_spread < 0:
        raise ParameterError(f"cluster_spread must be >= 0, got {cluster_spread}")
    rng = np.random.default_rng(seed)
    means = rng.uniform(0.0, 1.0, size=(num_classes, d_in))
    labels = np.repeat(np.arange(num_classes), samples_per_class)
    x = means[labels] + cluster_spread * rng.normal(size=(labels.size, d_in))
    # one global affine map keeps the cluster geometry intact
    lo, hi = x.min(), x.max()
    x = (x - lo) / (hi - lo) if hi > lo else np.zeros_like(x)
    order = rng.permutation(labels.size)
    return Dataset(x[order], labels[order], num_classes)


# ---------------------------------------------------------------- partitions

def _reserve_public(n_items: int, public_size: int, rng) -> tuple[np.ndarray, np.ndarray]:
    if public_size < 0 or public_size > n_items:
        raise ConfigError(f"public size {public_size} not in [0, {n_items}]")
    perm = rng.permutation(n_items)
    return np.sort(perm[:public_size]), perm[public_size:]


def split_train_test(chunk: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n_train = int(np.floor(TRAIN_FRACTION * len(chunk) + 0.5))
    return chunk[:n_train], chunk[n_train:]


def _label_groups(num_classes: int, k: int, rng) -> list[list[int]]:
    """Chunk a stream of seeded label shuffles into ceil(C/k) groups of k distinct labels."""
    n_groups = -(-num_classes // k)
    stream: list[int] = []
    groups: list[list[int]] = []
    while len(groups) < n_groups:
        current: list[int] = []
        while len(current) < k:
            if not stream:
                stream = [int(v) for v in rng.permutation(num_classes)]
            # first label in the stream not already in this group
            pos = next(i for i, v in enumerate(stream) if v not in current)
            current.append(stream.pop(pos))
        groups.append(current)
    return groups


def partition_label_skew(ds: Dataset, num_clients: int, labels_per_client: int, seed: int,
                         public_size: int = 0) -> Partition:
    """Each client holds exactly ``labels_per_client`` labels; clients sharing a label split its samples."""
    C, k, N = ds.num_classes, labels_per_client, num_clients
    if ds.labels is None:
        raise ConfigError("label-skew partitioning needs a labeled dataset")
    if N < 1 or not 1 <= k <= C:
        raise ConfigError(f"labels_per_client={k} must lie in [1, {C}] with num_clients={N} >= 1")
    n_groups = -(-C // k)
    if N < n_groups:
        raise ConfigError(f"{N} clients x {k} labels cannot cover all {C} labels")
    rng = np.random.default_rng(seed)
    public, rest = _reserve_public(len(ds), public_size, rng)
    groups = _label_groups(C, k, rng)
    client_labels = [sorted(groups[n % n_groups]) for n in range(N)]

    train: list[list[np.ndarray]] = [[] for _ in range(N)]
    test: list[list[np.ndarray]] = [[] for _ in range(N)]
    rest_labels = ds.labels[rest]
    for label in range(C):
        holders = [n for n in range(N) if label in client_labels[n]]
        pool = rest[rest_labels == label]
        if len(pool) < 2 * len(holders):
            raise ConfigError(f"label {label}: {len(pool)} samples for {len(holders)} clients")
        for n, chunk in zip(holders, np.array_split(pool, len(holders))):
            tr, te = split_train_test(chunk)
            train[n].append(tr)
            test[n].append(te)
    return Partition(
        private=tuple(np.sort(np.concatenate(t)) for t in train),
        test=tuple(np.sort(np.concatenate(t)) for t in test),
        public=public,
        client_labels=tuple(tuple(c) for c in client_labels),
    )


def _apportion(total: int, props: np.ndarray, floor_one: bool) -> np.ndarray:
    """Integer counts summing to ``total``, proportional to ``props`` (largest remainder)."""
    n = len(props)
    base = np.ones(n, dtype=np.int64) if floor_one and total >= n else np.zeros(n, dtype=np.int64)
    remaining = total - int(base.sum())
    share = props * remaining
    counts = np.floor(share).astype(np.int64)
    short = remaining - int(counts.sum())
    if short:
        order = np.argsort(-(share - counts), kind="stable")
        counts[order[:short]] += 1
    return base + counts


def partition_dirichlet(ds: Dataset, num_clients: int, alpha: float, seed: int, public_size: int = 0) -> Partition:
    """Per-class client proportions drawn from Dirichlet(alpha); every client gets every class when possible."""
    if not alpha > 0:
        raise ConfigError(f"dirichlet alpha must be > 0, got {alpha}")
    if num_clients < 1:
        raise ConfigError("num_clients must be >= 1")
    if ds.labels is None:
        raise ConfigError("dirichlet partitioning needs a labeled dataset")
    N = num_clients
    rng = np.random.default_rng(seed)
    public, rest = _reserve_public(len(ds), public_size, rng)
    rest_labels = ds.labels[rest]
    train: list[list[np.ndarray]] = [[] for _ in range(N)]
    test: list[list[np.ndarray]] = [[] for _ in range(N)]
    for label in range(ds.num_classes):
        pool = rest[rest_labels == label]
        props = rng.dirichlet(np.full(N, float(alpha)))
        counts = _apportion(len(pool), props, floor_one=True)
        for n, chunk in enumerate(np.split(pool, np.cumsum(counts)[:-1])):
            tr, te = split_train_test(chunk)
            train[n].append(tr)
            test[n].append(te)
    part = Partition(
        private=tuple(np.sort(np.concatenate(t)) for t in train),
        test=tuple(np.sort(np.concatenate(t)) for t in test),
        public=public,
        client_labels=tuple(
            tuple(sorted(set(int(v) for v in ds.labels[np.concatenate([a, b])])))
            for a, b in zip([np.concatenate(t) for t in train], [np.concatenate(t) for t in test])
        ),
    )
    if np.any(part.sizes == 0):
        raise ConfigError(f"dirichlet split left a client without training data (sizes {part.sizes.tolist()})")
    return part


def carve_public(source: Dataset, size: int, labeled: bool, seed: int) -> Dataset:
    """Seeded subsample of a public source; labels are dropped when ``labeled`` is False."""
    if size < 0 or size > len(source):
        raise ConfigError(f"public size {size} exceeds source of {len(source)} samples")
    if size == 0:
        warnings.warn("public set is empty; distillation will be a no-op", stacklevel=2)
    idx = np.random.default_rng(seed).choice(len(source), size=size, replace=False)
    sub = source.subset(idx)
    return sub if labeled else Dataset(sub.inputs, None, sub.num_classes)


def batches(indices, batch_size: int, seed: int, epoch: int) -> list[np.ndarray]:
    if batch_size < 1:
        raise ParameterError(f"batch_size must be >= 1, got {batch_size}")
    idx = np.asarray(indices)
    order = idx[np.random.default_rng([seed, epoch]).permutation(len(idx))]
    return [order[i:i + batch_size] for i in range(0, len(order), batch_size)]
