"""Chance constraints: definitions, linear surrogates, and Gaussian tightening.

A scalar state constraint ``g(x) <= 0`` required to hold with probability at
least ``p`` is replaced, around a nominal belief ``(mean, cov)``, by the
deterministic tightened constraint on the mean

    G mean + q + rho <= 0,

where ``(G, q)`` is the first-order expansion of ``g`` and
``rho = sqrt(2 G cov G^T) * inverse_erf(2p - 1)`` is the Gaussian safety
margin along the constraint normal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import numdiff
from .errors import DegenerateGradientError, InvalidInputError, NumericalError
from .models import agent_position, num_agents

DEGENERATE_GRADIENT_NORM = 1e-9
_COINCIDENT_NUDGE = np.array([1e-6, 0.0])


def inverse_erf(y: float) -> float:
    """Inverse of the error function on (-1, 1).

    A closed-form initial guess is refined by two Newton steps against the
    library erf, which is accurate to machine precision; the round-trip error
    ``|erf(inverse_erf(y)) - y|`` stays below 1e-10 across (-0.999, 0.999).
    """
    y = float(y)
    if not -1.0 < y < 1.0:
        raise InvalidInputError(f"inverse_erf requires |y| < 1, got {y}")
    if y == 0.0:
        return 0.0
    # Winitzki's log-based approximation as the starting point.
    a = 0.147
    ln_term = math.log1p(-y * y)
    u = 2.0 / (math.pi * a) + 0.5 * ln_term
    x = math.copysign(math.sqrt(math.sqrt(u * u - ln_term / a) - u), y)
    for _ in range(2):
        err = math.erf(x) - y
        x -= err * 0.5 * math.sqrt(math.pi) * math.exp(min(x * x, 700.0))
    return x


def standard_normal_cdf(t: float) -> float:
    return 0.5 * (1.0 + math.erf(t / math.sqrt(2.0)))


def standard_normal_quantile(p: float) -> float:
    if not 0.0 < p < 1.0:
        raise InvalidInputError(f"quantile requires p in (0, 1), got {p}")
    return math.sqrt(2.0) * inverse_erf(2.0 * p - 1.0)


@dataclass(frozen=True)
class DiscObstacle:
    """Disc-shaped obstacle: center and radius."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        if self.center.shape != (2,):
            raise InvalidInputError("disc center must be a 2-vector")
        if not self.radius > 0.0:
            raise InvalidInputError(f"disc radius must be positive, got {self.radius}")


@dataclass(frozen=True)
class PolygonObstacle:
    """Convex polygon obstacle given by its vertices."""

    vertices: np.ndarray

    def __post_init__(self):
        verts = np.asarray(self.vertices, dtype=float)
        if verts.ndim != 2 or verts.shape[1] != 2 or verts.shape[0] < 3:
            raise InvalidInputError("polygon needs at least 3 planar vertices")
        # Normalize to counter-clockwise order and require convexity.
        area = 0.0
        for a, b in zip(verts, np.roll(verts, -1, axis=0)):
            area += a[0] * b[1] - b[0] * a[1]
        if area < 0.0:
            verts = verts[::-1].copy()
        crosses = []
        for a, b, c in zip(verts, np.roll(verts, -1, axis=0), np.roll(verts, -2, axis=0)):
            u, v = b - a, c - b
            crosses.append(u[0] * v[1] - u[1] * v[0])
        if min(crosses) < -1e-12:
            raise InvalidInputError("polygon vertices are not convex")
        object.__setattr__(self, "vertices", verts)

    def halfspaces(self):
        """Outward unit normals and offsets so the polygon is n.p <= b for all edges."""
        normals = []
        offsets = []
        for a, b in zip(self.vertices, np.roll(self.vertices, -1, axis=0)):
            edge = b - a
            length = float(np.linalg.norm(edge))
            if length < 1e-12:
                continue
            n = np.array([edge[1], -edge[0]]) / length
            normals.append(n)
            offsets.append(float(n @ a))
        if not normals:
            raise InvalidInputError("polygon has no edges of positive length")
        return np.array(normals), np.array(offsets)


def proximity_value(state, pair, min_distance: float) -> float:
    """Constraint value ``min_distance - |p_i - p_j|``; <= 0 means far enough apart."""
    i, j = pair
    delta = agent_position(np.asarray(state, dtype=float), i) - agent_position(
        np.asarray(state, dtype=float), j
    )
    return float(min_distance - np.linalg.norm(delta))


def proximity_gradient(state, pair, min_distance: float) -> np.ndarray:
    """Gradient of :func:`proximity_value`; coincident agents get a fixed nudge."""
    x = np.asarray(state, dtype=float)
    i, j = pair
    delta = agent_position(x, i) - agent_position(x, j)
    norm = float(np.linalg.norm(delta))
    if norm < 1e-12:
        delta = delta + _COINCIDENT_NUDGE
        norm = float(np.linalg.norm(delta))
    direction = delta / norm
    grad = np.zeros_like(x)
    grad[4 * i : 4 * i + 2] = -direction
    grad[4 * j : 4 * j + 2] = direction
    return grad


def _nearest_halfspace(obstacle, position):
    """Supporting halfspace (n, b) of the obstacle region nearest ``position``."""
    if isinstance(obstacle, DiscObstacle):
        delta = position - obstacle.center
        norm = float(np.linalg.norm(delta))
        if norm < 1e-12:
            delta = delta + _COINCIDENT_NUDGE
            norm = float(np.linalg.norm(delta))
        n = delta / norm
        return n, float(n @ obstacle.center + obstacle.radius)
    if isinstance(obstacle, PolygonObstacle):
        normals, offsets = obstacle.halfspaces()
        idx = int(np.argmax(normals @ position - offsets))
        return normals[idx], float(offsets[idx])
    raise InvalidInputError(f"unsupported obstacle geometry: {type(obstacle).__name__}")


def obstacle_value(state, agent: int, obstacle) -> float:
    """Signed halfspace value ``b - n.p``; <= 0 means outside on the safe side."""
    x = np.asarray(state, dtype=float)
    if not 0 <= agent < num_agents(x):
        raise InvalidInputError(f"agent index {agent} out of range")
    p = agent_position(x, agent)
    n, b = _nearest_halfspace(obstacle, p)
    return float(b - n @ p)


def obstacle_gradient(state, agent: int, obstacle) -> np.ndarray:
    x = np.asarray(state, dtype=float)
    p = agent_position(x, agent)
    n, _ = _nearest_halfspace(obstacle, p)
    grad = np.zeros_like(x)
    grad[4 * agent : 4 * agent + 2] = -n
    return grad


@dataclass(frozen=True)
class ChanceConstraintSpec:
    """One scalar chance constraint: kind, parameters, threshold, active steps.

    ``step_range`` is the inclusive (first, last) timestep window; ``None``
    means active at every step of the horizon.
    """

    kind: str
    threshold: float
    pair: Optional[tuple] = None
    min_distance: Optional[float] = None
    agent: Optional[int] = None
    obstacle: object = None
    step_range: Optional[tuple] = None

    def __post_init__(self):
        if self.kind not in ("proximity", "obstacle"):
            raise InvalidInputError(f"unknown constraint kind {self.kind!r}")
        if not 0.0 < self.threshold < 1.0:
            raise InvalidInputError(f"threshold must lie in (0, 1), got {self.threshold}")
        if self.kind == "proximity":
            if self.pair is None or self.min_distance is None:
                raise InvalidInputError("proximity constraint needs pair and min_distance")
            if self.pair[0] == self.pair[1]:
                raise InvalidInputError("proximity pair indices must be distinct")
            if not self.min_distance > 0.0:
                raise InvalidInputError(f"min_distance must be positive, got {self.min_distance}")
        else:
            if self.agent is None or self.obstacle is None:
                raise InvalidInputError("obstacle constraint needs agent and obstacle")

    def validate(self, n_players: int, horizon: int):
        """Game-level validation; stricter than construction.

        A threshold at or below one half is accepted by the tightening
        formulas (rho just goes negative) but rejected here as user error.
        """
        if self.threshold <= 0.5:
            raise InvalidInputError(
                f"chance threshold must exceed 0.5 in a game, got {self.threshold}"
            )
        indices = self.pair if self.kind == "proximity" else (self.agent,)
        for idx in indices:
            if not 0 <= idx < n_players:
                raise InvalidInputError(f"constraint references invalid agent {idx}")
        first, last = self.window(horizon)
        if not 0 <= first <= last <= horizon:
            raise InvalidInputError(f"step range ({first}, {last}) not within [0, {horizon}]")

    def window(self, horizon: int) -> tuple:
        if self.step_range is None:
            return 0, horizon
        return int(self.step_range[0]), int(self.step_range[1])

    def active_steps(self, horizon: int) -> range:
        first, last = self.window(horizon)
        return range(first, last + 1)

    def value(self, state) -> float:
        if self.kind == "proximity":
            return proximity_value(state, self.pair, self.min_distance)
        return obstacle_value(state, self.agent, self.obstacle)

    def gradient(self, state) -> np.ndarray:
        if self.kind == "proximity":
            return proximity_gradient(state, self.pair, self.min_distance)
        return obstacle_gradient(state, self.agent, self.obstacle)

    def label(self) -> str:
        if self.kind == "proximity":
            return f"proximity({self.pair[0]},{self.pair[1]})"
        return f"obstacle(agent={self.agent})"


@dataclass(frozen=True)
class LinearizedConstraint:
    """Affine surrogate ``G x + q`` of one constraint with its safety margin."""

    G: np.ndarray
    q: float
    rho: float
    k: int
    m: int
    sigma2: float = 0.0


def linearize_constraint(g_fn: Callable, nominal_mean, grad_fn: Optional[Callable] = None):
    """First-order expansion ``(G, q)`` of ``g`` about the nominal mean.

    ``q`` is fixed so that ``G x + q`` reproduces ``g`` exactly at the nominal.
    Uses the analytic gradient when provided, otherwise central differences.
    """
    x = np.asarray(nominal_mean, dtype=float)
    G = np.asarray(grad_fn(x) if grad_fn is not None else numdiff.gradient(g_fn, x), dtype=float)
    if float(np.linalg.norm(G)) < DEGENERATE_GRADIENT_NORM:
        raise DegenerateGradientError(
            f"constraint gradient norm {np.linalg.norm(G):.3e} below {DEGENERATE_GRADIENT_NORM}"
        )
    q = float(g_fn(x) - G @ x)
    return G, q


def safety_margin_rho(G, cov, p: float) -> float:
    """Gaussian tightening margin ``sigma * quantile(p)`` along direction G."""
    if not 0.0 < p < 1.0:
        raise InvalidInputError(f"threshold must lie in (0, 1), got {p}")
    G = np.asarray(G, dtype=float)
    sigma2 = float(G @ np.asarray(cov, dtype=float) @ G)
    if sigma2 < -1e-12:
        raise NumericalError(f"negative constraint-direction variance {sigma2:.3e}")
    sigma2 = max(sigma2, 0.0)
    return math.sqrt(2.0 * sigma2) * inverse_erf(2.0 * p - 1.0)


def surrogate_value(lc: LinearizedConstraint, mean) -> float:
    """Tightened deterministic constraint value ``G mean + q + rho``."""
    return float(lc.G @ np.asarray(mean, dtype=float) + lc.q + lc.rho)


def chance_violation_probability(lc: LinearizedConstraint, mean, cov, p: float) -> float:
    """Probability-scale violation ``p - Pr(G x + q <= 0)`` under the linearization.

    Diagnostics only; the solver's dual updates run on the linear surrogate
    scale. A deterministic direction (sigma = 0) falls back to a sign test.
    """
    mean = np.asarray(mean, dtype=float)
    sigma2 = float(lc.G @ np.asarray(cov, dtype=float) @ lc.G)
    value = float(lc.G @ mean + lc.q)
    if sigma2 <= 0.0:
        return p - 1.0 if value <= 0.0 else p
    return p - standard_normal_cdf(-value / math.sqrt(sigma2))


def linearize_constraints(spec, means, covs):
    """Linearize every active (timestep, constraint) pair along a nominal.

    Returns a list of :class:`LinearizedConstraint`, ordered by constraint
    index then timestep; this ordering is the multiplier bookkeeping order.
    """
    horizon = means.shape[0] - 1
    out = []
    for m, cons in enumerate(spec.constraints):
        for k in cons.active_steps(horizon):
            G, q = linearize_constraint(cons.value, means[k], cons.gradient)
            sigma2 = float(G @ covs[k] @ G)
            rho = safety_margin_rho(G, covs[k], cons.threshold)
            out.append(LinearizedConstraint(G=G, q=q, rho=rho, k=k, m=m, sigma2=max(sigma2, 0.0)))
    return out
