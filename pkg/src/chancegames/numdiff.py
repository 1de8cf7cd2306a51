"""Central finite-difference fallbacks for user-supplied models."""

from __future__ import annotations

import numpy as np


def jacobian(fn, x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central-difference Jacobian of a vector-valued function at ``x``."""
    x = np.asarray(x, dtype=float)
    f0 = np.asarray(fn(x), dtype=float)
    jac = np.empty((f0.shape[0], x.shape[0]))
    for j in range(x.shape[0]):
        hi = x.copy()
        lo = x.copy()
        hi[j] += step
        lo[j] -= step
        jac[:, j] = (np.asarray(fn(hi)) - np.asarray(fn(lo))) / (2.0 * step)
    return jac


def gradient(fn, x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function at ``x``."""
    x = np.asarray(x, dtype=float)
    grad = np.empty(x.shape[0])
    for j in range(x.shape[0]):
        hi = x.copy()
        lo = x.copy()
        hi[j] += step
        lo[j] -= step
        grad[j] = (fn(hi) - fn(lo)) / (2.0 * step)
    return grad


def hessian(fn, x: np.ndarray, step: float = 1e-4) -> np.ndarray:
    """Symmetric central-difference Hessian of a scalar function at ``x``."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    hess = np.empty((n, n))
    f0 = fn(x)
    for i in range(n):
        for j in range(i, n):
            pp = x.copy(); pp[i] += step; pp[j] += step
            mm = x.copy(); mm[i] -= step; mm[j] -= step
            pm = x.copy(); pm[i] += step; pm[j] -= step
            mp = x.copy(); mp[i] -= step; mp[j] += step
            if i == j:
                hess[i, i] = (fn(pp) - 2.0 * f0 + fn(mm)) / (4.0 * step**2)
            else:
                val = (fn(pp) - fn(pm) - fn(mp) + fn(mm)) / (4.0 * step**2)
                hess[i, j] = val
                hess[j, i] = val
    return hess
