"""Vehicle dynamics, measurement models, driving costs, and the game container.

Joint state layout: agents are concatenated in declaration order, four entries
per agent, fixed ordering ``(x [m], y [m], heading [rad], speed [m/s])``.
Controls are two entries per player: ``(yaw rate [rad/s], acceleration [m/s^2])``.

All objects here are immutable value objects after construction and all
operations are pure functions, so everything is safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError

STATE_DIM = 4
CONTROL_DIM = 2


def _as_array(value, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return arr


def num_agents(state: np.ndarray) -> int:
    """Number of agents encoded in a joint state vector."""
    n = state.shape[0]
    if n % STATE_DIM != 0 or n == 0:
        raise InvalidInputError(f"joint state length {n} is not a positive multiple of {STATE_DIM}")
    return n // STATE_DIM


def agent_slice(i: int) -> slice:
    """Index slice of agent ``i``'s block inside the joint state."""
    return slice(STATE_DIM * i, STATE_DIM * (i + 1))


def agent_position(state: np.ndarray, i: int) -> np.ndarray:
    """Planar position of agent ``i``."""
    return state[STATE_DIM * i : STATE_DIM * i + 2]


def unicycle_step(agent_state, control, process_noise, dt: float) -> np.ndarray:
    """Advance one unicycle by an explicit-Euler step plus additive noise.

    Returns ``[x + v cos(h) dt, y + v sin(h) dt, h + w dt, v + a dt] + noise``
    for state ``(x, y, h, v)`` and control ``(w, a)``.
    """
    s = _as_array(agent_state, "agent_state")
    u = _as_array(control, "control")
    w = _as_array(process_noise, "process_noise")
    if s.shape != (STATE_DIM,) or u.shape != (CONTROL_DIM,) or w.shape != (STATE_DIM,):
        raise InvalidInputError(
            f"expected shapes ({STATE_DIM},), ({CONTROL_DIM},), ({STATE_DIM},); "
            f"got {s.shape}, {u.shape}, {w.shape}"
        )
    if dt <= 0.0:
        raise InvalidInputError(f"dt must be positive, got {dt}")
    x, y, heading, speed = s
    return np.array(
        [
            x + speed * np.cos(heading) * dt,
            y + speed * np.sin(heading) * dt,
            heading + u[0] * dt,
            speed + u[1] * dt,
        ]
    ) + w


def joint_step(state, controls, noise, dt: float) -> np.ndarray:
    """Advance the joint state, one independent unicycle block per agent.

    ``controls`` has shape ``(N, 2)`` and ``noise`` length ``4N``. Agent ``i``'s
    block depends only on its own state block and its own control.
    """
    x = _as_array(state, "state")
    u = _as_array(controls, "controls")
    w = _as_array(noise, "noise")
    n = num_agents(x)
    if u.shape != (n, CONTROL_DIM):
        raise InvalidInputError(f"controls shape {u.shape} does not match {n} agents")
    if w.shape != x.shape:
        raise InvalidInputError(f"noise shape {w.shape} does not match state shape {x.shape}")
    out = np.empty_like(x)
    for i in range(n):
        blk = agent_slice(i)
        out[blk] = unicycle_step(x[blk], u[i], w[blk], dt)
    return out


class UnicycleDynamics:
    """Joint dynamics: independent unicycles with additive full-state noise."""

    def step(self, state, controls, noise, dt):
        return joint_step(state, controls, noise, dt)

    def linearize(self, state, controls, dt):
        """Jacobians of :func:`joint_step` at ``(state, controls, noise=0)``.

        Returns ``(A, Bs, W)`` with ``A`` block-diagonal per agent, ``Bs`` a
        list of per-player input Jacobians, and ``W`` the identity (noise is
        additive on the full state).
        """
        x = _as_array(state, "state")
        n = num_agents(x)
        dim = STATE_DIM * n
        A = np.zeros((dim, dim))
        Bs = []
        for i in range(n):
            blk = agent_slice(i)
            heading, speed = x[STATE_DIM * i + 2], x[STATE_DIM * i + 3]
            A[blk, blk] = np.array(
                [
                    [1.0, 0.0, -speed * np.sin(heading) * dt, np.cos(heading) * dt],
                    [0.0, 1.0, speed * np.cos(heading) * dt, np.sin(heading) * dt],
                    [0.0, 0.0, 1.0, 0.0],
                    [0.0, 0.0, 0.0, 1.0],
                ]
            )
            B = np.zeros((dim, CONTROL_DIM))
            B[STATE_DIM * i + 2, 0] = dt
            B[STATE_DIM * i + 3, 1] = dt
            Bs.append(B)
        return A, Bs, np.eye(dim)


def additive_measurement(state, noise) -> np.ndarray:
    """Full-state measurement with velocity-independent additive noise."""
    x = _as_array(state, "state")
    v = _as_array(noise, "noise")
    if v.shape != x.shape:
        raise InvalidInputError(f"noise shape {v.shape} does not match state shape {x.shape}")
    return x + v


def speed_scaled_measurement(state, noise) -> np.ndarray:
    """Full-state measurement whose noise is scaled by each agent's speed.

    Per agent block: ``y_i = x_i + speed_i * noise_i``, so faster agents are
    measured more noisily and an agent at rest is measured exactly.
    """
    x = _as_array(state, "state")
    v = _as_array(noise, "noise")
    if v.shape != x.shape:
        raise InvalidInputError(f"noise shape {v.shape} does not match state shape {x.shape}")
    n = num_agents(x)
    y = x.copy()
    for i in range(n):
        blk = agent_slice(i)
        y[blk] += x[STATE_DIM * i + 3] * v[blk]
    return y


class AdditiveMeasurement:
    """y = x + v; linearization is (I, I)."""

    name = "additive"

    def measure(self, state, noise):
        return additive_measurement(state, noise)

    def linearize(self, state):
        x = _as_array(state, "state")
        dim = x.shape[0]
        return np.eye(dim), np.eye(dim)


class SpeedScaledMeasurement:
    """y_i = x_i + speed_i * v_i per agent block.

    At the zero-noise linearization point the noise-times-speed term vanishes,
    so H = I, while V is block diagonal with agent i's block speed_i * I.
    """

    name = "speed_scaled"

    def measure(self, state, noise):
        return speed_scaled_measurement(state, noise)

    def linearize(self, state):
        x = _as_array(state, "state")
        n = num_agents(x)
        dim = x.shape[0]
        V = np.zeros((dim, dim))
        for i in range(n):
            blk = agent_slice(i)
            V[blk, blk] = x[STATE_DIM * i + 3] * np.eye(STATE_DIM)
        return np.eye(dim), V


MEASUREMENT_MODELS = {
    "additive": AdditiveMeasurement,
    "speed_scaled": SpeedScaledMeasurement,
}


def point_to_polyline(point: np.ndarray, polyline: np.ndarray):
    """Closest point on a polyline.

    Returns ``(distance, closest_point, tangent)`` where ``tangent`` is the
    unit direction of the segment containing the closest point, or ``None``
    when the closest point is an interior vertex or the polyline is a single
    point (the squared distance is locally ``|p - closest|^2`` there).
    """
    p = np.asarray(point, dtype=float)
    line = np.asarray(polyline, dtype=float)
    if line.ndim != 2 or line.shape[1] != 2 or line.shape[0] < 1:
        raise InvalidInputError(f"polyline must have shape (K, 2) with K >= 1, got {line.shape}")
    if line.shape[0] == 1:
        return float(np.linalg.norm(p - line[0])), line[0].copy(), None

    best_d2 = np.inf
    best_point = line[0]
    best_tangent = None
    for a, b in zip(line[:-1], line[1:]):
        seg = b - a
        seg_len2 = float(seg @ seg)
        if seg_len2 == 0.0:
            t = 0.0
        else:
            t = float(np.clip((p - a) @ seg / seg_len2, 0.0, 1.0))
        candidate = a + t * seg
        d2 = float((p - candidate) @ (p - candidate))
        if d2 < best_d2:
            best_d2 = d2
            best_point = candidate
            best_tangent = seg / np.sqrt(seg_len2) if 0.0 < t < 1.0 else None
    return float(np.sqrt(best_d2)), best_point, best_tangent


@dataclass(frozen=True)
class PlayerCost:
    """Quadratic driving cost for one player.

    Penalizes squared distance from the lane-center polyline, squared
    deviation from a nominal cruise speed, and squared control channels.
    """

    lane_center: np.ndarray
    lane_weight: float
    nominal_speed: float
    speed_weight: float
    control_weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lane_center", _as_array(self.lane_center, "lane_center"))
        object.__setattr__(
            self, "control_weights", _as_array(self.control_weights, "control_weights")
        )
        if self.lane_center.ndim != 2 or self.lane_center.shape[1] != 2:
            raise InvalidInputError("lane_center must be a (K, 2) polyline")
        if self.control_weights.shape != (CONTROL_DIM,):
            raise InvalidInputError(f"control_weights must have shape ({CONTROL_DIM},)")
        for name, w in (
            ("lane_weight", self.lane_weight),
            ("speed_weight", self.speed_weight),
        ):
            if w < 0.0:
                raise InvalidInputError(f"{name} must be nonnegative, got {w}")
        if np.any(self.control_weights < 0.0):
            raise InvalidInputError("control_weights must be nonnegative")
        if self.nominal_speed < 0.0:
            raise InvalidInputError(f"nominal_speed must be nonnegative, got {self.nominal_speed}")


def state_cost(player: int, state, cost: PlayerCost) -> float:
    """Lane-deviation plus speed-deviation terms of one player's cost."""
    x = _as_array(state, "state")
    n = num_agents(x)
    if not 0 <= player < n:
        raise InvalidInputError(f"player index {player} out of range for {n} agents")
    dist, _, _ = point_to_polyline(agent_position(x, player), cost.lane_center)
    speed = x[STATE_DIM * player + 3]
    return cost.lane_weight * dist**2 + cost.speed_weight * (speed - cost.nominal_speed) ** 2


def running_cost(player: int, state, controls, cost: PlayerCost) -> float:
    """Stage cost: state terms plus the player's own weighted squared controls."""
    u = _as_array(controls, "controls")
    if u.ndim != 2 or u.shape[1] != CONTROL_DIM:
        raise InvalidInputError(f"controls must have shape (N, {CONTROL_DIM}), got {u.shape}")
    return state_cost(player, state, cost) + float(cost.control_weights @ (u[player] ** 2))


def terminal_cost(player: int, state, cost: PlayerCost) -> float:
    """Cost charged at the final state (state terms only)."""
    return state_cost(player, state, cost)


def _check_symmetric_psd(mat: np.ndarray, name: str, sym_tol: float = 1e-9, eig_tol: float = -1e-9):
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise InvalidInputError(f"{name} must be square, got shape {mat.shape}")
    if not np.all(np.abs(mat - mat.T) <= sym_tol):
        raise InvalidInputError(f"{name} is not symmetric within {sym_tol}")
    if mat.shape[0] > 0 and float(np.linalg.eigvalsh(mat)[0]) < eig_tol:
        raise InvalidInputError(f"{name} is not positive semidefinite")


@dataclass(frozen=True)
class GaussianBelief:
    """Gaussian state distribution: mean vector and covariance matrix."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", _as_array(self.mean, "mean"))
        object.__setattr__(self, "cov", _as_array(self.cov, "cov"))
        if self.cov.shape != (self.mean.shape[0], self.mean.shape[0]):
            raise InvalidInputError(
                f"cov shape {self.cov.shape} does not match mean length {self.mean.shape[0]}"
            )
        _check_symmetric_psd(self.cov, "cov")

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True)
class NoiseSpec:
    """Process and measurement noise covariances."""

    process_cov: np.ndarray
    measurement_cov: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "process_cov", _as_array(self.process_cov, "process_cov"))
        object.__setattr__(
            self, "measurement_cov", _as_array(self.measurement_cov, "measurement_cov")
        )
        _check_symmetric_psd(self.process_cov, "process_cov")
        _check_symmetric_psd(self.measurement_cov, "measurement_cov")


@dataclass(frozen=True)
class GameSpec:
    """Everything that defines one constrained stochastic game instance."""

    n_players: int
    horizon: int
    dt: float
    dynamics: object
    measurement: object
    costs: tuple
    constraints: tuple
    noise: NoiseSpec
    initial_belief: GaussianBelief

    def __post_init__(self):
        object.__setattr__(self, "costs", tuple(self.costs))
        object.__setattr__(self, "constraints", tuple(self.constraints))
        if self.n_players < 1:
            raise InvalidInputError(f"n_players must be >= 1, got {self.n_players}")
        if self.horizon < 1:
            raise InvalidInputError(f"horizon must be >= 1, got {self.horizon}")
        if self.dt <= 0.0:
            raise InvalidInputError(f"dt must be positive, got {self.dt}")
        if len(self.costs) != self.n_players:
            raise InvalidInputError(
                f"expected {self.n_players} player costs, got {len(self.costs)}"
            )
        n = STATE_DIM * self.n_players
        if self.initial_belief.dim != n:
            raise InvalidInputError(
                f"initial belief dimension {self.initial_belief.dim} does not match 4N={n}"
            )
        for c in self.constraints:
            c.validate(self.n_players, self.horizon)

    @property
    def state_dim(self) -> int:
        return STATE_DIM * self.n_players

    @property
    def control_dims(self) -> tuple:
        return (CONTROL_DIM,) * self.n_players
