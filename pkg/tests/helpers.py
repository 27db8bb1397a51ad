"""Shared test utilities: finite-difference oracle and gradient comparison."""

from __future__ import annotations

import numpy as np


def finite_difference(fn, params: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite-difference gradient of scalar fn(), perturbing in place."""
    grad = np.zeros_like(params)
    for i in range(params.size):
        old = params[i]
        params[i] = old + h
        f_plus = fn()
        params[i] = old - h
        f_minus = fn()
        params[i] = old
        grad[i] = (f_plus - f_minus) / (2.0 * h)
    return grad


def max_rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(float(np.max(np.abs(analytic))), float(np.max(np.abs(numeric))), 1e-8)
    return float(np.max(np.abs(analytic - numeric))) / scale
