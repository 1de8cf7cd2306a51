"""Outer augmented-Lagrangian loop around an iterative LQ stochastic game.

Each outer round linearizes the chance constraints around the current nominal
belief trajectory (their tightened surrogates are then held fixed), updates
the multipliers from the surrogate violations, and runs the inner loop. The
inner loop repeats linearize / quadraticize / solve / line-searched zero-noise
rollout until the nominal stops moving. Separation lets the deterministic LQ
game policies act on the filter mean, with covariances precomputed per
nominal.

The soft-penalty baseline mode keeps multipliers at zero and applies one fixed
always-on penalty weight to every constraint, with no growth, so a single
hand-picked weight plays the role the dual updates fill otherwise.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import belief as bel
from .auglag import (
    MultiplierState,
    al_merit,
    al_quadratic_terms,
    max_surrogate_violation,
    penalty_gate,
    update_multipliers,
)
from .constraints import linearize_constraints, surrogate_value
from .errors import InvalidInputError
from .lqgame import LQGameStage, solve_lq_game
from .models import (
    CONTROL_DIM,
    GameSpec,
    PlayerCost,
    agent_position,
    agent_slice,
    point_to_polyline,
    running_cost,
    terminal_cost,
)

MODE_AUGMENTED_LAGRANGIAN = "augmented-lagrangian"
MODE_FIXED_PENALTY = "fixed-penalty"

HESSIAN_FLOOR = 1e-6


@dataclass(frozen=True)
class SolverConfig:
    """Tolerances, iteration caps, and mode for one solve."""

    inner_tol: float = 1e-2
    inner_max_iter: int = 50
    outer_tol: float = 1e-3
    outer_max_iter: int = 20
    line_search_factor: float = 0.5
    line_search_max_trials: int = 12
    mode: str = MODE_AUGMENTED_LAGRANGIAN
    fixed_penalty_weight: float = 1.0
    mu0: float = 10.0
    phi: float = 5.0

    def __post_init__(self):
        if self.inner_tol <= 0.0 or self.outer_tol <= 0.0:
            raise InvalidInputError("tolerances must be positive")
        if not 0.0 < self.line_search_factor < 1.0:
            raise InvalidInputError("line_search_factor must lie in (0, 1)")
        if self.inner_max_iter < 1 or self.outer_max_iter < 1 or self.line_search_max_trials < 1:
            raise InvalidInputError("iteration caps must be at least 1")
        if self.mode not in (MODE_AUGMENTED_LAGRANGIAN, MODE_FIXED_PENALTY):
            raise InvalidInputError(f"unknown mode {self.mode!r}")
        if self.fixed_penalty_weight <= 0.0:
            raise InvalidInputError("fixed_penalty_weight must be positive")
        if self.mu0 <= 0.0 or self.phi <= 1.0:
            raise InvalidInputError("mu0 must be positive and phi must exceed 1")

    @property
    def fixed_weight(self):
        return self.fixed_penalty_weight if self.mode == MODE_FIXED_PENALTY else None


@dataclass(frozen=True)
class Solution:
    """Converged (or best-effort) output of :func:`outer_solve`."""

    trajectory: bel.BeliefTrajectory
    policies: tuple
    multipliers: MultiplierState
    diagnostics: dict
    wall_time_s: float = 0.0

    @property
    def converged(self) -> bool:
        return bool(self.diagnostics["converged"])

    @property
    def final_violation(self) -> float:
        return float(self.diagnostics["final_violation"])


def _clamp_psd_block(block: np.ndarray, floor: float) -> np.ndarray:
    vals, vecs = np.linalg.eigh(0.5 * (block + block.T))
    return (vecs * np.maximum(vals, floor)) @ vecs.T


def _state_quadratic(cost: PlayerCost, player: int, x_nom: np.ndarray):
    """Agent-block gradient and Hessian of the lane + speed terms at a state."""
    pos = agent_position(x_nom, player)
    dist, closest, tangent = point_to_polyline(pos, cost.lane_center)
    grad4 = np.zeros(4)
    hess4 = np.zeros((4, 4))
    grad4[:2] = 2.0 * cost.lane_weight * (pos - closest)
    if tangent is None:
        hess4[:2, :2] = 2.0 * cost.lane_weight * np.eye(2)
    else:
        hess4[:2, :2] = 2.0 * cost.lane_weight * (np.eye(2) - np.outer(tangent, tangent))
    speed = x_nom[4 * player + 3]
    grad4[3] = 2.0 * cost.speed_weight * (speed - cost.nominal_speed)
    hess4[3, 3] = 2.0 * cost.speed_weight
    return grad4, hess4


def _al_entries(linearized, mult: MultiplierState, means, fixed_weight):
    """(constraint, lam, gate) triples with gates evaluated at the given means."""
    entries = []
    for idx, lc in enumerate(linearized):
        if fixed_weight is not None:
            entries.append((lc, 0.0, float(fixed_weight)))
        else:
            c = surrogate_value(lc, means[lc.k])
            lam = float(mult.lam[idx])
            entries.append((lc, lam, penalty_gate(c, lam, float(mult.mu[idx]))))
    return entries


def quadraticize_costs(nominal: bel.BeliefTrajectory, spec: GameSpec, al_entries=()):
    """Per-stage quadratic game data along a nominal, with penalty injections.

    Every player's state quadratic receives the same constraint increments;
    Hessians get an eigenvalue floor so the stage game stays well conditioned.
    Returns ``(stages, terminal_Qs, terminal_ls, terminal_consts)``.
    """
    L = nominal.horizon
    n = spec.state_dim
    N = spec.n_players

    inc_Q = [np.zeros((n, n)) for _ in range(L + 1)]
    inc_l = [np.zeros(n) for _ in range(L + 1)]
    inc_c = np.zeros(L + 1)
    for lc, lam, gate in al_entries:
        Q_inc, l_inc, const_inc = al_quadratic_terms(lc, lam, gate)
        x_nom = nominal.means[lc.k]
        inc_Q[lc.k] += Q_inc
        inc_l[lc.k] += Q_inc @ x_nom + l_inc
        inc_c[lc.k] += 0.5 * x_nom @ Q_inc @ x_nom + l_inc @ x_nom + const_inc

    stages = []
    for k in range(L):
        x_nom = nominal.means[k]
        u_nom = nominal.controls[k]
        A, Bs, _ = bel.linearize_dynamics(spec.dynamics, x_nom, u_nom, spec.dt)
        Qs, ls, Rs, rs, consts = [], [], [], [], []
        for i in range(N):
            cost = spec.costs[i]
            grad4, hess4 = _state_quadratic(cost, i, x_nom)
            Q = HESSIAN_FLOOR * np.eye(n)
            blk = agent_slice(i)
            Q[blk, blk] = _clamp_psd_block(hess4, HESSIAN_FLOOR)
            l = np.zeros(n)
            l[blk] = grad4
            Qs.append(Q + inc_Q[k])
            ls.append(l + inc_l[k])
            R_row = []
            r_row = []
            for j in range(N):
                if j == i:
                    R_row.append(
                        _clamp_psd_block(2.0 * np.diag(cost.control_weights), HESSIAN_FLOOR)
                    )
                    r_row.append(2.0 * cost.control_weights * u_nom[i])
                else:
                    R_row.append(np.zeros((CONTROL_DIM, CONTROL_DIM)))
                    r_row.append(np.zeros(CONTROL_DIM))
            Rs.append(tuple(R_row))
            rs.append(tuple(r_row))
            consts.append(running_cost(i, x_nom, u_nom, cost) + inc_c[k])
        stages.append(
            LQGameStage(
                A=A, Bs=tuple(Bs), Qs=tuple(Qs), ls=tuple(ls),
                Rs=tuple(Rs), rs=tuple(rs), consts=tuple(consts),
            )
        )

    terminal_Qs, terminal_ls, terminal_consts = [], [], []
    x_nom = nominal.means[L]
    for i in range(N):
        grad4, hess4 = _state_quadratic(spec.costs[i], i, x_nom)
        Q = HESSIAN_FLOOR * np.eye(n)
        blk = agent_slice(i)
        Q[blk, blk] = _clamp_psd_block(hess4, HESSIAN_FLOOR)
        l = np.zeros(n)
        l[blk] = grad4
        terminal_Qs.append(Q + inc_Q[L])
        terminal_ls.append(l + inc_l[L])
        terminal_consts.append(terminal_cost(i, x_nom, spec.costs[i]) + inc_c[L])
    return stages, tuple(terminal_Qs), tuple(terminal_ls), tuple(terminal_consts)


def trajectory_costs(spec: GameSpec, means: np.ndarray, controls: np.ndarray) -> np.ndarray:
    """True (non-quadraticized) per-player cost of a trajectory."""
    totals = np.zeros(spec.n_players)
    L = means.shape[0] - 1
    for i in range(spec.n_players):
        for k in range(L):
            totals[i] += running_cost(i, means[k], controls[k], spec.costs[i])
        totals[i] += terminal_cost(i, means[L], spec.costs[i])
    return totals


def _rollout_means(spec: GameSpec, previous: bel.BeliefTrajectory, policies, eta: float):
    """Zero-noise closed-loop means/controls without the covariance schedule."""
    L = previous.horizon
    means = np.empty_like(previous.means)
    controls = np.empty_like(previous.controls)
    means[0] = previous.means[0]
    zero = np.zeros(spec.state_dim)
    for k in range(L):
        for j, policy in enumerate(policies):
            controls[k, j] = (
                previous.controls[k, j]
                - policy.gains[k] @ (means[k] - previous.means[k])
                - eta * policy.feedforwards[k]
            )
        means[k + 1] = spec.dynamics.step(means[k], controls[k], zero, spec.dt)
    return means, controls


def _merit(spec, linearized, mult, fixed_weight, means, controls) -> float:
    costs = trajectory_costs(spec, means, controls)
    return float(costs.sum()) + spec.n_players * al_merit(linearized, means, mult, fixed_weight)


def inner_solve(nominal: bel.BeliefTrajectory, spec: GameSpec, linearized,
                mult: MultiplierState, config: SolverConfig):
    """Iterated LQ game steps until the nominal trajectory stops moving.

    Returns ``(trajectory, policies, diagnostics)``. Policies are re-centered
    on the returned nominal (zero feedforward), so replaying them through a
    zero-noise rollout reproduces that nominal exactly.
    """
    current = nominal
    cur_merit = _merit(spec, linearized, mult, config.fixed_weight,
                       current.means, current.controls)
    steps = []
    converged = False
    line_search_failed = False
    policies = None
    for _ in range(config.inner_max_iter):
        entries = _al_entries(linearized, mult, current.means, config.fixed_weight)
        stages, tQs, tls, _ = quadraticize_costs(current, spec, entries)
        policies = solve_lq_game(stages, tQs, tls)

        accepted = None
        eta = 1.0
        for _trial in range(config.line_search_max_trials):
            means, controls = _rollout_means(spec, current, policies, eta)
            merit = _merit(spec, linearized, mult, config.fixed_weight, means, controls)
            if merit <= cur_merit:
                accepted = (eta, means, controls, merit)
                break
            eta *= config.line_search_factor
        if accepted is None:
            line_search_failed = True
            break

        eta, means, controls, merit = accepted
        change = float(np.max(np.linalg.norm(means - current.means, axis=1)))
        schedule = bel.precompute_covariances(means, controls, spec)
        current = bel.BeliefTrajectory(
            means=means, covs=schedule.covs, controls=controls, schedule=schedule
        )
        cur_merit = merit
        steps.append({"step_size": eta, "merit": merit, "mean_change": change})
        if change < config.inner_tol:
            converged = True
            break

    if policies is None:
        entries = _al_entries(linearized, mult, current.means, config.fixed_weight)
        stages, tQs, tls, _ = quadraticize_costs(current, spec, entries)
        policies = solve_lq_game(stages, tQs, tls)
    diagnostics = {
        "iterations": len(steps),
        "converged": converged,
        "line_search_failed": line_search_failed,
        "steps": steps,
        "final_merit": cur_merit,
    }
    return current, tuple(p.recentered() for p in policies), diagnostics


def outer_solve(spec: GameSpec, initial_controls=None,
                config: SolverConfig = SolverConfig()) -> Solution:
    """Solve one constrained stochastic game instance end to end.

    Alternates constraint linearization, dual updates (skipped in the
    soft-penalty baseline mode), and inner solves until the largest tightened
    surrogate violation drops below tolerance. Never raises on
    non-convergence: the returned diagnostics carry an explicit flag and the
    final violation.
    """
    start = time.perf_counter()
    if initial_controls is None:
        initial_controls = np.zeros((spec.horizon, spec.n_players, CONTROL_DIM))
    nominal = bel.rollout_controls(spec, initial_controls)
    policies = None
    mult = None
    outer_log = []
    converged = False
    final_violation = 0.0
    fixed_mode = config.mode == MODE_FIXED_PENALTY

    for outer in range(config.outer_max_iter):
        linearized = linearize_constraints(spec, nominal.means, nominal.covs)
        if mult is None:
            keys = tuple((lc.k, lc.m) for lc in linearized)
            mu0 = config.fixed_penalty_weight if fixed_mode else config.mu0
            mult = MultiplierState.initial(keys, mu0=mu0, phi=config.phi)
        c_values = np.array(
            [surrogate_value(lc, nominal.means[lc.k]) for lc in linearized]
        )
        final_violation = max_surrogate_violation(c_values)
        if outer > 0 and final_violation <= config.outer_tol:
            converged = True
            break
        if outer > 0 and not fixed_mode:
            mult = update_multipliers(mult, c_values)

        nominal, policies, inner_diag = inner_solve(nominal, spec, linearized, mult, config)
        entry = {
            "outer": outer,
            "max_violation": float(final_violation),
            "inner": inner_diag,
            "player_costs": trajectory_costs(spec, nominal.means, nominal.controls).tolist(),
        }
        if not fixed_mode and mult.lam.size:
            entry["max_multiplier"] = float(mult.lam.max())
            entry["max_penalty"] = float(mult.mu.max())
        outer_log.append(entry)
    else:
        # Iteration cap reached: report the violation of the final nominal.
        linearized = linearize_constraints(spec, nominal.means, nominal.covs)
        final_violation = max_surrogate_violation(
            [surrogate_value(lc, nominal.means[lc.k]) for lc in linearized]
        )
        converged = final_violation <= config.outer_tol

    if policies is None:
        # No constraints and horizon-zero outer exit cannot happen (the loop
        # always runs at least one inner solve), but guard anyway.
        linearized = linearize_constraints(spec, nominal.means, nominal.covs)
        nominal, policies, _ = inner_solve(nominal, spec, linearized, mult, config)

    diagnostics = {
        "mode": config.mode,
        "converged": converged,
        "final_violation": float(final_violation),
        "outer_iterations": len(outer_log),
        "outer": outer_log,
        "covariance_jitter": bool(nominal.schedule.jittered),
    }
    wall = time.perf_counter() - start
    return Solution(
        trajectory=nominal,
        policies=policies,
        multipliers=mult,
        diagnostics=diagnostics,
        wall_time_s=wall,
    )


def convergence_report(solution: Solution) -> dict:
    """Structured per-iteration summary of a finished solve.

    The multiplier section is present only for augmented-Lagrangian runs.
    """
    diag = solution.diagnostics
    report = {
        "mode": diag["mode"],
        "converged": diag["converged"],
        "final_violation": diag["final_violation"],
        "wall_time_s": solution.wall_time_s,
        "outer_iterations": diag["outer_iterations"],
        "max_violation_per_outer": [o["max_violation"] for o in diag["outer"]],
        "player_costs_per_outer": [o["player_costs"] for o in diag["outer"]],
        "inner_iterations_per_outer": [o["inner"]["iterations"] for o in diag["outer"]],
    }
    if diag["mode"] == MODE_AUGMENTED_LAGRANGIAN:
        report["multipliers"] = {
            "max_multiplier_per_outer": [o.get("max_multiplier", 0.0) for o in diag["outer"]],
            "max_penalty_per_outer": [o.get("max_penalty", 0.0) for o in diag["outer"]],
            "final_multipliers": solution.multipliers.lam.tolist()
            if solution.multipliers is not None
            else [],
        }
    return report
