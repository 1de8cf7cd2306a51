"""Multiplier/penalty bookkeeping and cost injections for the outer loop.

Multipliers and penalties are kept per (timestep, constraint) pair and live on
the linear surrogate scale ``c = G mean + q + rho``: the inner loop minimizes
that surrogate, so dual updates must match the primal terms. Probability-scale
violations are reported separately as diagnostics.

The terms emitted for one constraint are identical for every player; they are
added to each player's quadratic cost untouched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constraints import LinearizedConstraint
from .errors import InvalidInputError

DEFAULT_MU0 = 10.0
DEFAULT_PHI = 5.0
MU_CAP = 1e8


@dataclass(frozen=True)
class MultiplierState:
    """Lagrange multipliers and penalty weights per (timestep, constraint).

    ``keys[i] = (k, m)`` names the pair that ``lam[i]`` and ``mu[i]`` belong
    to. ``phi > 1`` is the growth factor applied to every penalty weight at
    each dual update; weights are capped to avoid destroying the conditioning
    of the quadraticized costs.
    """

    keys: tuple
    lam: np.ndarray
    mu: np.ndarray
    phi: float = DEFAULT_PHI
    mu_cap: float = MU_CAP

    def __post_init__(self):
        object.__setattr__(self, "lam", np.asarray(self.lam, dtype=float))
        object.__setattr__(self, "mu", np.asarray(self.mu, dtype=float))
        if self.phi <= 1.0:
            raise InvalidInputError(f"penalty growth factor must exceed 1, got {self.phi}")
        if len(self.keys) != self.lam.shape[0] or len(self.keys) != self.mu.shape[0]:
            raise InvalidInputError("multiplier arrays must match the key list")
        if np.any(self.lam < 0.0):
            raise InvalidInputError("multipliers must be nonnegative")
        if np.any(self.mu <= 0.0):
            raise InvalidInputError("penalty weights must be positive")

    @classmethod
    def initial(cls, keys, mu0: float = DEFAULT_MU0, phi: float = DEFAULT_PHI) -> "MultiplierState":
        keys = tuple(keys)
        return cls(keys=keys, lam=np.zeros(len(keys)), mu=np.full(len(keys), float(mu0)), phi=phi)

    def index(self, key) -> int:
        return self.keys.index(key)


def penalty_gate(c: float, lam: float, mu: float) -> float:
    """Active-set penalty weight: 0 when inactive (c < 0 and lam = 0), else mu.

    The inactive branch never reads mu, so gate composition stays well defined
    (gate of a gated value is 0 or mu, never an error).
    """
    if lam < 0.0:
        raise InvalidInputError(f"lam must be nonnegative, got {lam}")
    if c < 0.0 and lam == 0.0:
        return 0.0
    if mu <= 0.0:
        raise InvalidInputError(f"mu must be positive, got {mu}")
    return mu


def update_multipliers(state: MultiplierState, surrogate_values: np.ndarray) -> MultiplierState:
    """One dual step: lam <- max(0, lam + mu c), mu <- phi mu (capped)."""
    c = np.asarray(surrogate_values, dtype=float)
    if c.shape != state.lam.shape:
        raise InvalidInputError(
            f"expected {state.lam.shape[0]} surrogate values, got {c.shape}"
        )
    lam = np.maximum(0.0, state.lam + state.mu * c)
    mu = np.minimum(state.phi * state.mu, state.mu_cap)
    return MultiplierState(keys=state.keys, lam=lam, mu=mu, phi=state.phi, mu_cap=state.mu_cap)


def al_quadratic_terms(lc: LinearizedConstraint, lam: float, gate: float):
    """Quadratic cost increments for one constraint, in absolute coordinates.

    Returns ``(Q_inc, l_inc, const_inc)`` such that adding
    ``0.5 x^T Q_inc x + l_inc^T x + const_inc`` to a player's cost reproduces
    the multiplier term plus the gated half-quadratic penalty of the surrogate
    in expectation; ``const_inc`` carries the trace correction that removes
    the covariance's contribution to the expected square.
    """
    G = lc.G
    offset = lc.q + lc.rho
    Q_inc = gate * np.outer(G, G)
    l_inc = lam * G + gate * offset * G
    const_inc = lam * offset + 0.5 * gate * offset**2 - 0.5 * gate * lc.sigma2
    return Q_inc, l_inc, const_inc


def al_merit(linearized, means, mult: MultiplierState, fixed_weight=None) -> float:
    """Augmented-Lagrangian constraint terms of a trajectory's means.

    With ``fixed_weight`` set, the gate is that weight for every pair and all
    multipliers are treated as zero (soft-penalty baseline behavior).
    """
    total = 0.0
    for idx, lc in enumerate(linearized):
        c = float(lc.G @ means[lc.k] + lc.q + lc.rho)
        if fixed_weight is not None:
            total += 0.5 * fixed_weight * c * c
        else:
            lam = float(mult.lam[idx])
            gate = penalty_gate(c, lam, float(mult.mu[idx]))
            total += lam * c + 0.5 * gate * c * c
    return total


def max_surrogate_violation(surrogate_values) -> float:
    """Largest positive surrogate value, 0 when all satisfied or none given."""
    values = np.asarray(surrogate_values, dtype=float)
    if values.size == 0:
        return 0.0
    return float(max(0.0, values.max()))
