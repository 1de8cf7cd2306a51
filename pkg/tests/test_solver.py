"""Tests for cost quadraticization and the inner/outer solve loops."""

import json
from types import SimpleNamespace

import numpy as np
import pytest

from chancegames import (
    GameSpec,
    GaussianBelief,
    ChanceConstraintSpec,
    NoiseSpec,
    PlayerCost,
    SolverConfig,
    builtin_scenario,
    convergence_report,
    inner_solve,
    outer_solve,
    quadraticize_costs,
)
from chancegames.artifacts import trajectory_to_dict
from chancegames.belief import rollout_controls
from chancegames.constraints import linearize_constraints
from chancegames.auglag import MultiplierState
from chancegames.solver import HESSIAN_FLOOR, trajectory_costs
from conftest import LinearDynamics, LinearMeasurement, fd_gradient, riccati_lqr


def straight_cost(lane_w=2.0, v_nom=1.0, speed_w=1.0, ctrl=(1.0, 0.5), y_ref=0.0):
    return PlayerCost(
        lane_center=np.array([[-100.0, y_ref], [200.0, y_ref]]),
        lane_weight=lane_w,
        nominal_speed=v_nom,
        speed_weight=speed_w,
        control_weights=np.array(ctrl),
    )


class AxisDynamics:
    """Linear single-agent plant: x += v dt, v += a dt; y, heading frozen."""

    def step(self, state, controls, noise, dt):
        u = np.asarray(controls, dtype=float)
        x, y, th, v = np.asarray(state, dtype=float)
        return np.array([x + v * dt, y, th, v + u[0][1] * dt]) + np.asarray(noise, dtype=float)

    def linearize(self, state, controls, dt):
        A = np.eye(4)
        A[0, 3] = dt
        B = np.zeros((4, 2))
        B[3, 1] = dt
        return A, [B], np.eye(4)


def axis_spec(horizon=8, dt=0.1, v0=2.0, v_nom=1.0, y0=0.4):
    return SimpleNamespace(
        n_players=1,
        horizon=horizon,
        dt=dt,
        state_dim=4,
        dynamics=AxisDynamics(),
        measurement=LinearMeasurement(np.eye(4)),
        costs=(straight_cost(v_nom=v_nom),),
        constraints=(),
        noise=NoiseSpec(process_cov=0.01 * np.eye(4), measurement_cov=0.01 * np.eye(4)),
        initial_belief=GaussianBelief(mean=np.array([0.0, y0, 0.0, v0]), cov=0.01 * np.eye(4)),
    )


class TestQuadraticize:
    def test_exact_on_quadratic_cost(self):
        spec = axis_spec()
        nominal = rollout_controls(spec, np.zeros((8, 1, 2)))
        stages, tQ, tl, _ = quadraticize_costs(nominal, spec)
        cost = spec.costs[0]
        expected_Q = np.diag([HESSIAN_FLOOR, 2 * cost.lane_weight, HESSIAN_FLOOR,
                              2 * cost.speed_weight])
        for k, stage in enumerate(stages):
            np.testing.assert_allclose(stage.Qs[0], expected_Q, atol=1e-12)
            y, v = nominal.means[k, 1], nominal.means[k, 3]
            np.testing.assert_allclose(
                stage.ls[0],
                [0.0, 2 * cost.lane_weight * y, 0.0, 2 * cost.speed_weight * (v - 1.0)],
                atol=1e-12,
            )
            np.testing.assert_allclose(stage.Rs[0][0], np.diag([2.0, 1.0]), atol=1e-12)
        np.testing.assert_allclose(tQ[0], expected_Q, atol=1e-12)

    def test_gradients_match_finite_differences(self, rng):
        cfg = builtin_scenario("merge")
        spec = cfg.to_game_spec()
        controls = rng.normal(scale=0.2, size=(spec.horizon, 2, 2))
        nominal = rollout_controls(spec, controls)
        stages, _, _, _ = quadraticize_costs(nominal, spec)
        from chancegames.models import running_cost

        for k in (0, 7, 15):
            for i in range(2):
                fd_l = fd_gradient(
                    lambda x: running_cost(i, x, nominal.controls[k], spec.costs[i]),
                    nominal.means[k],
                )
                np.testing.assert_allclose(
                    stages[k].ls[i], fd_l, atol=1e-5 * (1 + np.abs(fd_l).max())
                )
                fd_r = fd_gradient(
                    lambda u: running_cost(
                        i, nominal.means[k],
                        np.vstack([u, nominal.controls[k, 1]]) if i == 0
                        else np.vstack([nominal.controls[k, 0], u]),
                        spec.costs[i],
                    ),
                    nominal.controls[k, i],
                )
                np.testing.assert_allclose(stages[k].rs[i][i], fd_r, atol=1e-6)

    def test_active_constraint_shifts_hessian_exactly(self):
        cfg = builtin_scenario("merge")
        spec = cfg.to_game_spec()
        nominal = rollout_controls(spec, np.zeros((spec.horizon, 2, 2)))
        lcs = linearize_constraints(spec, nominal.means, nominal.covs)
        lc = lcs[3]
        mu = 10.0
        base, _, _, _ = quadraticize_costs(nominal, spec)
        bumped, _, _, _ = quadraticize_costs(nominal, spec, [(lc, 0.0, mu)])
        delta = bumped[lc.k].Qs[0] - base[lc.k].Qs[0]
        np.testing.assert_array_equal(delta, mu * np.outer(lc.G, lc.G))
        # increment shared by every player (same emitted terms; addition to
        # different bases only reshuffles rounding)
        np.testing.assert_allclose(
            bumped[lc.k].Qs[0] - base[lc.k].Qs[0],
            bumped[lc.k].Qs[1] - base[lc.k].Qs[1],
            atol=1e-12,
        )
        np.testing.assert_allclose(
            np.asarray(bumped[lc.k].ls[0]) - np.asarray(base[lc.k].ls[0]),
            np.asarray(bumped[lc.k].ls[1]) - np.asarray(base[lc.k].ls[1]),
            atol=1e-12,
        )


class TestInnerSolve:
    def test_linear_quadratic_converges_to_lqr(self):
        # Exact LQ problem (point target makes every moving channel's Hessian
        # PD, so the eigenvalue floor touches only the inert heading channel):
        # the first iterate already lands on the optimum.
        spec = axis_spec()
        cost = PlayerCost(
            lane_center=np.array([[3.0, 0.0]]),
            lane_weight=2.0,
            nominal_speed=1.0,
            speed_weight=1.0,
            control_weights=np.array([1.0, 0.5]),
        )
        spec.costs = (cost,)
        nominal = rollout_controls(spec, np.zeros((8, 1, 2)))
        mult = MultiplierState.initial(())
        config = SolverConfig()
        out, policies, diag = inner_solve(nominal, spec, [], mult, config)
        assert diag["converged"]
        assert diag["iterations"] <= 2
        assert diag["steps"][0]["step_size"] == 1.0

        Q = np.diag([2 * cost.lane_weight, 2 * cost.lane_weight, HESSIAN_FLOOR,
                     2 * cost.speed_weight])
        l = np.array([-2 * cost.lane_weight * 3.0, 0.0, 0.0,
                      -2 * cost.speed_weight * cost.nominal_speed])
        R = np.diag([2 * cost.control_weights[0], 2 * cost.control_weights[1]])
        A = np.eye(4)
        A[0, 3] = spec.dt
        B = np.zeros((4, 2))
        B[3, 1] = spec.dt
        gains, ffs = riccati_lqr(A, B, [Q] * 8, [l] * 8, R, [np.zeros(2)] * 8, Q, l)
        x = spec.initial_belief.mean.copy()
        for k in range(8):
            u = -gains[k] @ x - ffs[k]
            np.testing.assert_allclose(out.controls[k, 0], u, atol=1e-8)
            x = A @ x + B @ u
            np.testing.assert_allclose(out.means[k + 1], x, atol=1e-8)

    def test_zero_cost_game_keeps_nominal(self):
        spec = axis_spec()
        spec.costs = (straight_cost(lane_w=0.0, speed_w=0.0, ctrl=(0.0, 0.0)),)
        nominal = rollout_controls(spec, np.zeros((8, 1, 2)))
        out, _, diag = inner_solve(nominal, spec, [], MultiplierState.initial(()), SolverConfig())
        assert diag["converged"]
        np.testing.assert_allclose(out.means, nominal.means, atol=1e-12)

    def test_line_search_merits_never_increase(self):
        cfg = builtin_scenario("merge")
        spec = cfg.to_game_spec()
        config = SolverConfig(mode="fixed-penalty", fixed_penalty_weight=400.0)
        solution = outer_solve(spec, config=config)
        for entry in solution.diagnostics["outer"]:
            merits = [s["merit"] for s in entry["inner"]["steps"]]
            assert all(b <= a + 1e-9 for a, b in zip(merits, merits[1:]))

    def test_merge_inner_iteration_budget(self):
        cfg = builtin_scenario("merge")
        spec = cfg.to_game_spec()
        nominal = rollout_controls(spec, np.zeros((spec.horizon, 2, 2)))
        lcs = linearize_constraints(spec, nominal.means, nominal.covs)
        mult = MultiplierState.initial(tuple((lc.k, lc.m) for lc in lcs))
        _, _, diag = inner_solve(nominal, spec, lcs, mult, SolverConfig())
        assert diag["converged"]
        assert diag["iterations"] <= 50


class TestOuterSolve:
    def test_constraint_free_single_round(self):
        spec = axis_spec()
        solution = outer_solve(spec)
        assert solution.converged
        assert solution.final_violation == 0.0
        assert solution.diagnostics["outer_iterations"] == 1

    def test_returned_nominal_satisfies_dynamics(self):
        cfg = builtin_scenario("merge")
        spec = cfg.to_game_spec()
        solution = outer_solve(spec, config=cfg.solver_config())
        traj = solution.trajectory
        for k in range(traj.horizon):
            step = spec.dynamics.step(traj.means[k], traj.controls[k],
                                      np.zeros(spec.state_dim), spec.dt)
            np.testing.assert_allclose(traj.means[k + 1], step, atol=1e-9)

    def test_zero_noise_replay_of_policies_reproduces_nominal(self):
        from chancegames.belief import rollout_zero_noise

        cfg = builtin_scenario("merge")
        spec = cfg.to_game_spec()
        solution = outer_solve(spec, config=cfg.solver_config())
        replay = rollout_zero_noise(solution.policies, solution.trajectory, spec)
        np.testing.assert_allclose(replay.means, solution.trajectory.means, atol=1e-12)

    def test_determinism_bitwise(self):
        cfg = builtin_scenario("merge")
        spec = cfg.to_game_spec()
        a = outer_solve(spec, config=cfg.solver_config())
        b = outer_solve(spec, config=cfg.solver_config())
        dump = lambda sol: json.dumps(trajectory_to_dict(sol), sort_keys=True)
        assert dump(a) == dump(b)
        assert a.multipliers.lam.tobytes() == b.multipliers.lam.tobytes()
        assert a.multipliers.mu.tobytes() == b.multipliers.mu.tobytes()

    def test_fixed_penalty_merge_fails_safe(self):
        cfg = builtin_scenario("merge")
        spec = cfg.to_game_spec()
        config = SolverConfig(mode="fixed-penalty", fixed_penalty_weight=1.0)
        solution = outer_solve(spec, config=config)
        assert not solution.converged
        assert solution.final_violation > 1e-3
        assert np.all(solution.multipliers.lam == 0.0)
        assert np.all(solution.multipliers.mu == 1.0)

    def test_mode_equivalence_first_inner_solve(self):
        # Force all gates active by demanding an unreachable separation, then
        # compare one inner solve in each mode with matching weights.
        base = builtin_scenario("merge")
        spec0 = base.to_game_spec()
        spec = GameSpec(
            n_players=spec0.n_players, horizon=spec0.horizon, dt=spec0.dt,
            dynamics=spec0.dynamics, measurement=spec0.measurement, costs=spec0.costs,
            constraints=(ChanceConstraintSpec(kind="proximity", threshold=0.9,
                                              pair=(0, 1), min_distance=30.0),),
            noise=spec0.noise, initial_belief=spec0.initial_belief,
        )
        w = 3.0
        al = SolverConfig(mu0=w, outer_max_iter=1, inner_max_iter=1)
        fp = SolverConfig(mode="fixed-penalty", fixed_penalty_weight=w,
                          outer_max_iter=1, inner_max_iter=1)
        sol_al = outer_solve(spec, config=al)
        sol_fp = outer_solve(spec, config=fp)
        assert np.array_equal(sol_al.trajectory.means, sol_fp.trajectory.means)
        assert np.array_equal(sol_al.trajectory.controls, sol_fp.trajectory.controls)


class TestConvergenceReport:
    def test_report_fields(self):
        cfg = builtin_scenario("merge")
        spec = cfg.to_game_spec()
        solution = outer_solve(spec, config=cfg.solver_config())
        report = convergence_report(solution)
        assert report["converged"]
        assert "multipliers" in report
        assert len(report["max_violation_per_outer"]) == report["outer_iterations"]
        assert report["wall_time_s"] >= 0.0
        assert len(report["player_costs_per_outer"][-1]) == 2

    def test_fixed_penalty_omits_multiplier_section(self):
        cfg = builtin_scenario("merge")
        spec = cfg.to_game_spec()
        solution = outer_solve(
            spec, config=SolverConfig(mode="fixed-penalty", fixed_penalty_weight=1.0)
        )
        report = convergence_report(solution)
        assert "multipliers" not in report
        assert not report["converged"]
        assert report["final_violation"] > 0.0

    def test_trajectory_costs_agree_with_diagnostics(self):
        cfg = builtin_scenario("merge")
        spec = cfg.to_game_spec()
        solution = outer_solve(spec, config=cfg.solver_config())
        recomputed = trajectory_costs(
            spec, solution.trajectory.means, solution.trajectory.controls
        )
        np.testing.assert_allclose(
            solution.diagnostics["outer"][-1]["player_costs"], recomputed
        )
