"""Constructed federations used by the property tests and experiment scripts."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .data import Dataset, Partition, split_train_test, synth_gen
from .fedsim import FedHyper, Federation
from .nn import Model, forward, softmax_t


def two_cluster_shift(hyper: FedHyper, clients_per_cluster: int = 4, per_client: int = 40,
                      num_classes: int = 4, d_in: int = 50, spread: float = 0.7,
                      public: int = 500) -> tuple[Federation, list[int]]:
    """Two client clusters that see the same inputs under conflicting labels.

    Cluster 1 relabels every sample y -> (y + 1) mod C, so a plain average of
    both clusters' predictions is actively misleading while a same-cluster
    mixture is not. Each client owns ``per_client`` samples (75/25 train/test);
    the first ``public`` samples form an unlabeled public pool. Returns the
    federation and each client's cluster id.
    """
    n_clients = 2 * clients_per_cluster
    C = num_classes
    spc = -(-(per_client * n_clients + public) // C)
    ds = synth_gen(C, spc, d_in, spread, hyper.seed)
    labels = ds.labels.copy()
    owned = np.arange(public, public + per_client * n_clients)
    train, test = [], []
    for n, chunk in enumerate(np.split(owned, n_clients)):
        if n >= clients_per_cluster:
            labels[chunk] = (ds.labels[chunk] + 1) % C
        tr, te = split_train_test(chunk)
        train.append(tr)
        test.append(te)
    data = Dataset(ds.inputs, labels, C)
    pub = np.arange(public)
    part = Partition(tuple(train), tuple(test), pub, ())
    pool = Dataset(ds.inputs[pub], None, C)
    return Federation(data, part, pool, hyper), [0] * clients_per_cluster + [1] * clients_per_cluster


def mixture_accuracy(fed: Federation, models: Sequence[Model], c: np.ndarray, T: float) -> float:
    """Mean over clients n of the test accuracy of the mixture sum_m c[m, n] softmax(h_m / T)."""
    accs = []
    for n, te in enumerate(fed.partition.test):
        x, y = fed.data.inputs[te], fed.data.labels[te]
        probs = [softmax_t(forward(m, x), T) for m in models]
        p = sum(c[m, n] * probs[m] for m in range(len(models)))
        accs.append(np.mean(p.argmax(axis=1) == y))
    return float(np.mean(accs))
