"""Deterministic simulator for personalized federated learning with learned knowledge coefficients."""

from .config import ExperimentConfig, emit_config, parse_config
from .data import Dataset, Partition, load_idx, partition_dirichlet, partition_label_skew, synth_gen
from .errors import ConfigError, KtpflError, ProtocolError
from .experiment import compare_runs, run_experiment
from .fedsim import ALGORITHMS, FedHyper, Federation, simulate
from .knowledge import KnowledgeHyper, SoftPredictionBank, coeff_gradient, coeff_update, ensemble_teacher
from .nn import Model, forward, init_model

__all__ = [
    "ALGORITHMS", "ConfigError", "Dataset", "ExperimentConfig", "FedHyper", "Federation", "KnowledgeHyper",
    "KtpflError", "Model", "Partition", "ProtocolError", "SoftPredictionBank", "coeff_gradient", "coeff_update",
    "compare_runs", "emit_config", "ensemble_teacher", "forward", "init_model", "load_idx", "parse_config",
    "partition_dirichlet", "partition_label_skew", "run_experiment", "simulate", "synth_gen",
]
