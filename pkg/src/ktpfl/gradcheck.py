"""Central finite differences, used as the oracle for every analytic gradient."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .nn import Model, flatten_params, unflatten_params

FD_STEP = 1e-5
REL_FLOOR = 1e-7


def central_difference(f: Callable[[np.ndarray], float], x: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    """Numerical gradient of a scalar function of an array, any shape."""
    x = np.array(x, dtype=np.float64, order="C")  # reshape below must be a view
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = f(x)
        flat[i] = orig - h
        down = f(x)
        flat[i] = orig
        gflat[i] = (up - down) / (2.0 * h)
    return grad


def model_fd_gradient(loss: Callable[[Model], float], model: Model, h: float = FD_STEP) -> np.ndarray:
    """Finite-difference gradient w.r.t. the flattened parameters of ``model``."""
    return central_difference(lambda v: loss(unflatten_params(model, v)), flatten_params(model), h)


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = REL_FLOOR) -> np.ndarray:
    """Elementwise |a - n| / max(|a|, |n|, floor).

    The floor keeps entries that are zero up to roundoff from dividing by ~0.
    """
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
