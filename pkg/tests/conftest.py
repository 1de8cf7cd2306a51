"""Shared test helpers: independent finite differences and a linear test plant."""

import numpy as np
import pytest


def fd_gradient(fn, x, step=1e-5):
    """Central-difference gradient, kept independent of the package's helpers."""
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape[0])
    for i in range(x.shape[0]):
        hi, lo = x.copy(), x.copy()
        hi[i] += step
        lo[i] -= step
        out[i] = (fn(hi) - fn(lo)) / (2 * step)
    return out


def fd_jacobian(fn, x, step=1e-5):
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.shape[0]):
        hi, lo = x.copy(), x.copy()
        hi[i] += step
        lo[i] -= step
        cols.append((np.asarray(fn(hi)) - np.asarray(fn(lo))) / (2 * step))
    return np.stack(cols, axis=1)


class LinearDynamics:
    """Duck-typed joint dynamics x' = A x + sum_j B_j u_j + w for solver tests."""

    def __init__(self, A, Bs):
        self.A = np.asarray(A, dtype=float)
        self.Bs = [np.asarray(B, dtype=float) for B in Bs]

    def step(self, state, controls, noise, dt):
        out = self.A @ np.asarray(state, dtype=float)
        controls = np.asarray(controls, dtype=float)
        for j, B in enumerate(self.Bs):
            out = out + B @ controls[j]
        return out + np.asarray(noise, dtype=float)

    def linearize(self, state, controls, dt):
        return self.A.copy(), [B.copy() for B in self.Bs], np.eye(self.A.shape[0])


class LinearMeasurement:
    """Duck-typed measurement y = H x + v."""

    def __init__(self, H):
        self.H = np.asarray(H, dtype=float)

    def measure(self, state, noise):
        return self.H @ np.asarray(state, dtype=float) + np.asarray(noise, dtype=float)

    def linearize(self, state):
        return self.H.copy(), np.eye(self.H.shape[0])


def riccati_lqr(A, B, Qs, ls, R, rs, QL, lL):
    """Classical discrete-time LQR with linear cost terms (test oracle).

    Stage cost 0.5 x'Qx + l'x + 0.5 u'Ru + r'u, terminal 0.5 x'QL x + lL'x.
    Returns per-step gains P_k and feedforwards a_k with u = -P x - a.
    """
    L = len(Qs)
    Z, zeta = np.asarray(QL, dtype=float), np.asarray(lL, dtype=float)
    gains, ffs = [None] * L, [None] * L
    for k in range(L - 1, -1, -1):
        S = R + B.T @ Z @ B
        P = np.linalg.solve(S, B.T @ Z @ A)
        a = np.linalg.solve(S, B.T @ zeta + rs[k])
        # Classical Riccati difference form (distinct arithmetic from the
        # closed-loop F' Z F + P' R P update used by the package).
        Z_new = Qs[k] + A.T @ Z @ A - A.T @ Z @ B @ P
        F = A - B @ P
        zeta_new = ls[k] + F.T @ (zeta - Z @ B @ a) + P.T @ (R @ a - rs[k])
        Z, zeta = 0.5 * (Z_new + Z_new.T), zeta_new
        gains[k], ffs[k] = P, a
    return gains, ffs


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
