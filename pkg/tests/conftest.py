import copy
import sys

import pytest

from ktpfl.config import config_from_dict

TINY = {
    "algorithm": "ktpfl",
    "num_clients": 4,
    "rounds": 3,
    "seed": 0,
    "model_groups": [{"count": 2, "hidden": [8]}, {"count": 2, "hidden": [6, 4]}],
    "dataset": {"kind": "synthetic",
                "synthetic": {"num_classes": 4, "samples_per_class": 40, "d_in": 6, "cluster_spread": 0.5}},
    "public": {"source": "reuse", "size": 24},
    "partition": {"kind": "label_skew", "labels_per_client": 2},
    "train": {"local_epochs": 2, "lr_local": 0.05, "lr_distill": 0.05, "lr_coeff": 0.1,
              "batch_size": 16, "public_batch_size": 8, "top_k": 2},
}


def _merge(base, over):
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(base.get(k), dict):
            _merge(base[k], v)
        else:
            base[k] = v
    return base


def make_config(**over):
    """Tiny validated config; nested sections merge into the defaults above."""
    return config_from_dict(_merge(copy.deepcopy(TINY), over))


@pytest.fixture
def tiny_config():
    return make_config


def pytest_terminal_summary(terminalreporter):
    results = getattr(sys.modules.get("test_acceptance"), "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
