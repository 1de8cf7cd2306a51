"""Exact feedback Nash equilibria of finite-horizon N-player LQ games.

Dynamics are affine deviations ``dx' = A dx + sum_j B_j du_j`` and each player
pays quadratic stage costs ``0.5 dx^T Q_i dx + l_i^T dx +
sum_j (0.5 du_j^T R_ij du_j + r_ij^T du_j)`` plus a terminal quadratic. The
solution is computed by backward induction on per-player quadratic value
functions: at each stage the players' first-order conditions are stacked into
one square linear system over all gains and feedforwards, solved by SVD so
that near-singular (degenerate) stage systems surface as errors instead of a
silent least-squares fallback.

Per the separation principle, these policies are applied to the filter's state
estimate when the game is stochastic with shared measurements.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import EquilibriumDegeneracyError, InvalidInputError, NumericalError

SINGULAR_VALUE_FLOOR = 1e-10
STATIONARITY_RESIDUAL_TOL = 1e-8


@dataclass(frozen=True)
class LQGameStage:
    """One stage of an N-player LQ game in deviation coordinates.

    ``consts`` carries per-player constant cost offsets; they never influence
    the equilibrium policies and exist only so trajectory values can be
    reconstructed exactly.
    """

    A: np.ndarray
    Bs: tuple
    Qs: tuple
    ls: tuple
    Rs: tuple      # Rs[i][j]: player i's weight on player j's control
    rs: tuple
    consts: tuple = None

    def __post_init__(self):
        object.__setattr__(self, "Bs", tuple(np.asarray(B, dtype=float) for B in self.Bs))
        object.__setattr__(self, "Qs", tuple(np.asarray(Q, dtype=float) for Q in self.Qs))
        object.__setattr__(self, "ls", tuple(np.asarray(l, dtype=float) for l in self.ls))
        object.__setattr__(
            self, "Rs", tuple(tuple(np.asarray(R, dtype=float) for R in row) for row in self.Rs)
        )
        object.__setattr__(
            self, "rs", tuple(tuple(np.asarray(r, dtype=float) for r in row) for row in self.rs)
        )
        if self.consts is None:
            object.__setattr__(self, "consts", (0.0,) * len(self.Qs))

    @property
    def n_players(self) -> int:
        return len(self.Bs)


@dataclass(frozen=True)
class AffineFeedbackPolicy:
    """Per-timestep affine feedback ``u_k = u_nom_k - P_k dx_k - alpha_k``."""

    gains: np.ndarray         # (L, m_i, n)
    feedforwards: np.ndarray  # (L, m_i)

    def __post_init__(self):
        object.__setattr__(self, "gains", np.asarray(self.gains, dtype=float))
        object.__setattr__(self, "feedforwards", np.asarray(self.feedforwards, dtype=float))
        if not np.all(np.isfinite(self.gains)) or not np.all(np.isfinite(self.feedforwards)):
            raise InvalidInputError("policy entries must be finite")

    @property
    def horizon(self) -> int:
        return self.gains.shape[0]

    def scaled(self, feedforward_scale: float) -> "AffineFeedbackPolicy":
        return AffineFeedbackPolicy(self.gains, feedforward_scale * self.feedforwards)

    def recentered(self) -> "AffineFeedbackPolicy":
        return AffineFeedbackPolicy(self.gains, np.zeros_like(self.feedforwards))


def _validate_stage(stage: LQGameStage, k: int):
    for i in range(stage.n_players):
        Rii = stage.Rs[i][i]
        if float(np.linalg.eigvalsh(0.5 * (Rii + Rii.T))[0]) <= 1e-9:
            raise InvalidInputError(
                f"R[{i}][{i}] at stage {k} is not positive definite"
            )
        Qi = stage.Qs[i]
        if not np.allclose(Qi, Qi.T, atol=1e-9, rtol=0.0):
            raise InvalidInputError(f"Q[{i}] at stage {k} is not symmetric")


def solve_lq_game(stages: Sequence[LQGameStage], terminal_Qs, terminal_ls):
    """Backward induction for the affine feedback Nash equilibrium.

    Returns one :class:`AffineFeedbackPolicy` per player. Raises
    :class:`EquilibriumDegeneracyError` when a stage's stacked stationarity
    system is near-singular.
    """
    if not stages:
        raise InvalidInputError("need at least one stage")
    n_players = stages[0].n_players
    n = stages[0].A.shape[0]
    m_dims = [stages[0].Bs[i].shape[1] for i in range(n_players)]
    offsets = np.concatenate([[0], np.cumsum(m_dims)])
    L = len(stages)

    Z = [np.asarray(Q, dtype=float).copy() for Q in terminal_Qs]
    zeta = [np.asarray(l, dtype=float).copy() for l in terminal_ls]
    gains = [np.empty((L, m_dims[i], n)) for i in range(n_players)]
    ffs = [np.empty((L, m_dims[i])) for i in range(n_players)]

    for k in range(L - 1, -1, -1):
        stage = stages[k]
        _validate_stage(stage, k)
        A, Bs = stage.A, stage.Bs
        S = np.zeros((offsets[-1], offsets[-1]))
        Yp = np.zeros((offsets[-1], n))
        Ya = np.zeros(offsets[-1])
        for i in range(n_players):
            rows = slice(offsets[i], offsets[i + 1])
            BiZ = Bs[i].T @ Z[i]
            for j in range(n_players):
                cols = slice(offsets[j], offsets[j + 1])
                S[rows, cols] = BiZ @ Bs[j]
                if i == j:
                    S[rows, cols] += stage.Rs[i][i]
            Yp[rows] = BiZ @ A
            Ya[rows] = Bs[i].T @ zeta[i] + stage.rs[i][i]

        U, sv, Vt = np.linalg.svd(S)
        if sv[-1] < SINGULAR_VALUE_FLOOR:
            raise EquilibriumDegeneracyError(k, float(sv[-1]))
        rhs = np.hstack([Yp, Ya[:, None]])
        solution = Vt.T @ ((U.T @ rhs) / sv[:, None])
        scale = max(1.0, float(np.max(np.abs(rhs))))
        residual = float(np.max(np.abs(S @ solution - rhs))) / scale
        if residual > STATIONARITY_RESIDUAL_TOL:
            raise NumericalError(
                f"stationarity residual {residual:.3e} exceeds tolerance at stage {k}"
            )
        P = [solution[offsets[i] : offsets[i + 1], :n] for i in range(n_players)]
        alpha = [solution[offsets[i] : offsets[i + 1], n] for i in range(n_players)]

        F = A - sum(Bs[j] @ P[j] for j in range(n_players))
        beta = -sum(Bs[j] @ alpha[j] for j in range(n_players))
        Z_next, zeta_next = Z, zeta
        Z, zeta = [], []
        for i in range(n_players):
            Zi = stage.Qs[i] + F.T @ Z_next[i] @ F
            zi = stage.ls[i] + F.T @ (zeta_next[i] + Z_next[i] @ beta)
            for j in range(n_players):
                Zi = Zi + P[j].T @ stage.Rs[i][j] @ P[j]
                zi = zi + P[j].T @ (stage.Rs[i][j] @ alpha[j] - stage.rs[i][j])
            Z.append(0.5 * (Zi + Zi.T))
            zeta.append(zi)
            gains[i][k] = P[i]
            ffs[i][k] = alpha[i]

    return [AffineFeedbackPolicy(gains[i], ffs[i]) for i in range(n_players)]


def apply_policy(policy: AffineFeedbackPolicy, k: int, estimate, nominal_state, nominal_control):
    """Control at step k: ``u_nom - P_k (estimate - x_nom) - alpha_k``."""
    if not 0 <= k < policy.horizon:
        raise InvalidInputError(f"step {k} outside policy horizon {policy.horizon}")
    return (
        np.asarray(nominal_control, dtype=float)
        - policy.gains[k] @ (np.asarray(estimate, dtype=float) - np.asarray(nominal_state, dtype=float))
        - policy.feedforwards[k]
    )


def rollout_policies(stages, policies, dx0):
    """Deviation-state closed-loop rollout; returns (dxs, dus) sequences."""
    dx = np.asarray(dx0, dtype=float).copy()
    dxs = [dx.copy()]
    dus = []
    for k, stage in enumerate(stages):
        du = [-pol.gains[k] @ dx - pol.feedforwards[k] for pol in policies]
        dx = stage.A @ dx + sum(B @ u for B, u in zip(stage.Bs, du))
        dus.append(du)
        dxs.append(dx.copy())
    return dxs, dus


def evaluate_policies(stages, terminal_Qs, terminal_ls, policies, dx0,
                      terminal_consts=None, controls_override=None):
    """Per-player total quadratic cost of the deterministic closed-loop rollout.

    ``controls_override`` maps ``(k, i)`` to a fixed deviation control for
    player i at step k, taking the place of that player's policy there (used
    for unilateral-perturbation checks).
    """
    n_players = stages[0].n_players
    if terminal_consts is None:
        terminal_consts = (0.0,) * n_players
    dx = np.asarray(dx0, dtype=float).copy()
    totals = np.zeros(n_players)
    for k, stage in enumerate(stages):
        du = [-pol.gains[k] @ dx - pol.feedforwards[k] for pol in policies]
        if controls_override:
            for i in range(n_players):
                if (k, i) in controls_override:
                    du[i] = np.asarray(controls_override[(k, i)], dtype=float)
        for i in range(n_players):
            cost = 0.5 * dx @ stage.Qs[i] @ dx + stage.ls[i] @ dx + stage.consts[i]
            for j in range(n_players):
                cost += 0.5 * du[j] @ stage.Rs[i][j] @ du[j] + stage.rs[i][j] @ du[j]
            totals[i] += cost
        dx = stage.A @ dx + sum(B @ u for B, u in zip(stage.Bs, du))
    for i in range(n_players):
        totals[i] += (
            0.5 * dx @ np.asarray(terminal_Qs[i]) @ dx
            + np.asarray(terminal_ls[i]) @ dx
            + terminal_consts[i]
        )
    return totals
