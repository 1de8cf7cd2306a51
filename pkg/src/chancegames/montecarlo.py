"""Closed-loop stochastic evaluation of solved strategies.

Each trial samples an initial true state from the initial belief, then runs
the noisy plant forward under the solution's feedback policies applied to the
filter mean. Constraint satisfaction is judged on the original nonlinear
constraint values along the true state trajectory, not on the linearized
surrogates the solver optimizes.

Trials are seeded with a counter-based generator, so any trial can be
reproduced (and the set run in any order) given its seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import belief as bel
from .errors import InvalidInputError
from .models import GameSpec
from .solver import Solution, trajectory_costs


def _psd_sqrt(mat: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(0.5 * (mat + mat.T))
    return vecs * np.sqrt(np.maximum(vals, 0.0))


@dataclass(frozen=True)
class TrialResult:
    """Outcome of one noisy closed-loop rollout."""

    states: np.ndarray        # (L+1, n) true states
    max_violation: float      # max over active (step, constraint) of nonlinear g
    satisfied: bool           # max_violation <= 0
    player_costs: np.ndarray  # realized per-player costs on the true trajectory
    seed: int


@dataclass(frozen=True)
class MonteCarloReport:
    """Aggregate of independent trials."""

    trials: int
    satisfaction_rate: float
    histogram_edges: np.ndarray
    histogram_counts: np.ndarray
    max_violations: np.ndarray
    seeds: tuple
    cost_mean: np.ndarray
    cost_std: np.ndarray


def _linearizations(solution: Solution, spec: GameSpec):
    """Dynamics/measurement Jacobians along the solution nominal."""
    traj = solution.trajectory
    lins = []
    for k in range(traj.horizon):
        A, Bs, _ = bel.linearize_dynamics(spec.dynamics, traj.means[k], traj.controls[k], spec.dt)
        H, V = bel.linearize_measurement(spec.measurement, traj.means[k + 1])
        lins.append((A, Bs, H, V))
    return lins


def simulate_closed_loop(solution: Solution, spec: GameSpec, seed: int,
                         _lins=None, _sqrts=None) -> TrialResult:
    """One noisy rollout: sample noises, filter, feed back, score constraints.

    Deterministic given the seed. The filter runs with the precomputed gain
    schedule of the solution nominal; only the mean recursion depends on the
    sampled measurements.
    """
    traj = solution.trajectory
    L = traj.horizon
    if L != spec.horizon:
        raise InvalidInputError("solution horizon does not match the game spec")
    lins = _lins if _lins is not None else _linearizations(solution, spec)
    if _sqrts is not None:
        sqrt_w, sqrt_v, sqrt_0 = _sqrts
    else:
        sqrt_w = _psd_sqrt(spec.noise.process_cov)
        sqrt_v = _psd_sqrt(spec.noise.measurement_cov)
        sqrt_0 = _psd_sqrt(spec.initial_belief.cov)
    gains = traj.schedule.gains

    rng = np.random.Generator(np.random.Philox(key=seed))
    n = spec.state_dim
    states = np.empty((L + 1, n))
    states[0] = spec.initial_belief.mean + sqrt_0 @ rng.standard_normal(n)
    estimate = np.asarray(spec.initial_belief.mean, dtype=float).copy()
    controls = np.empty_like(traj.controls)

    for k in range(L):
        A, Bs, H, V = lins[k]
        for j, policy in enumerate(solution.policies):
            controls[k, j] = (
                traj.controls[k, j]
                - policy.gains[k] @ (estimate - traj.means[k])
                - policy.feedforwards[k]
            )
        w = sqrt_w @ rng.standard_normal(n)
        states[k + 1] = spec.dynamics.step(states[k], controls[k], w, spec.dt)
        v = sqrt_v @ rng.standard_normal(n)
        y = spec.measurement.measure(states[k + 1], v)

        du = controls[k] - traj.controls[k]
        prior = traj.means[k + 1] + A @ (estimate - traj.means[k])
        for j, B in enumerate(Bs):
            prior = prior + B @ du[j]
        nominal_measurement = spec.measurement.measure(traj.means[k + 1], np.zeros(n))
        innovation = y - (nominal_measurement + H @ (prior - traj.means[k + 1]))
        estimate = prior + gains[k] @ innovation

    max_violation = -np.inf
    for cons in spec.constraints:
        for k in cons.active_steps(L):
            max_violation = max(max_violation, cons.value(states[k]))
    if max_violation == -np.inf:
        max_violation = 0.0

    costs = trajectory_costs(spec, states, controls)
    return TrialResult(
        states=states,
        max_violation=float(max_violation),
        satisfied=bool(max_violation <= 0.0),
        player_costs=costs,
        seed=int(seed),
    )


def run_trials(solution: Solution, spec: GameSpec, n: int, base_seed: int = 0) -> MonteCarloReport:
    """Run ``n`` independent trials seeded ``base_seed .. base_seed + n - 1``."""
    if n < 1:
        raise InvalidInputError(f"trial count must be >= 1, got {n}")
    lins = _linearizations(solution, spec)
    sqrts = (
        _psd_sqrt(spec.noise.process_cov),
        _psd_sqrt(spec.noise.measurement_cov),
        _psd_sqrt(spec.initial_belief.cov),
    )
    results = [
        simulate_closed_loop(solution, spec, base_seed + t, _lins=lins, _sqrts=sqrts)
        for t in range(n)
    ]
    violations = np.array([r.max_violation for r in results])
    counts, edges = np.histogram(violations, bins=20)
    costs = np.stack([r.player_costs for r in results])
    satisfied = sum(1 for r in results if r.satisfied)
    return MonteCarloReport(
        trials=n,
        satisfaction_rate=satisfied / n,
        histogram_edges=edges,
        histogram_counts=counts,
        max_violations=violations,
        seeds=tuple(r.seed for r in results),
        cost_mean=costs.mean(axis=0),
        cost_std=costs.std(axis=0, ddof=1) if n > 1 else np.zeros(spec.n_players),
    )
