"""Tests for linearization and EKF belief propagation."""

from types import SimpleNamespace

import numpy as np
import pytest

from chancegames import (
    AdditiveMeasurement,
    GaussianBelief,
    Linearization,
    NoiseSpec,
    SpeedScaledMeasurement,
    UnicycleDynamics,
    ekf_predict,
    ekf_update,
    linearize_dynamics,
    linearize_measurement,
    precompute_covariances,
    rollout_controls,
    rollout_zero_noise,
)
from chancegames.lqgame import AffineFeedbackPolicy
from conftest import LinearDynamics, LinearMeasurement, fd_jacobian, riccati_lqr


def scalar_lin(a, w=1.0, h=1.0, v=1.0):
    return Linearization(
        A=np.array([[a]]), Bs=(np.zeros((1, 1)),), W=np.array([[w]]),
        H=np.array([[h]]), V=np.array([[v]]),
    )


class TestLinearizeDynamics:
    def test_linear_system_returns_itself(self, rng):
        A = rng.normal(size=(4, 4))
        Bs = [rng.normal(size=(4, 2)), rng.normal(size=(4, 2))]
        model = LinearDynamics(A, Bs)
        A_out, Bs_out, W = linearize_dynamics(model, rng.normal(size=4), rng.normal(size=(2, 2)), 0.1)
        np.testing.assert_array_equal(A_out, A)
        for B, B_out in zip(Bs, Bs_out):
            np.testing.assert_array_equal(B_out, B)
        np.testing.assert_array_equal(W, np.eye(4))

    def test_unicycle_position_speed_coupling(self):
        model = UnicycleDynamics()
        A, _, _ = linearize_dynamics(model, np.array([0, 0, 0, 1.0]), np.zeros((1, 2)), 0.15)
        assert A[0, 3] == pytest.approx(0.15)
        assert A[1, 3] == pytest.approx(0.0)

    def test_jacobians_match_finite_differences(self, rng):
        model = UnicycleDynamics()
        dt = 0.15
        for _ in range(5):
            x = rng.normal(size=8) * np.array([5, 5, 1, 3, 5, 5, 1, 3])
            u = rng.normal(size=(2, 2))
            A, Bs, W = linearize_dynamics(model, x, u, dt)
            fd_A = fd_jacobian(lambda z: model.step(z, u, np.zeros(8), dt), x)
            np.testing.assert_allclose(A, fd_A, atol=1e-6)
            for j in range(2):
                def step_u(uj, j=j):
                    uu = u.copy()
                    uu[j] = uj
                    return model.step(x, uu, np.zeros(8), dt)
                np.testing.assert_allclose(Bs[j], fd_jacobian(step_u, u[j]), atol=1e-6)
            fd_W = fd_jacobian(lambda w: model.step(x, u, w, dt), np.zeros(8))
            np.testing.assert_allclose(W, fd_W, atol=1e-6)


class TestLinearizeMeasurement:
    def test_additive_identity(self, rng):
        H, V = linearize_measurement(AdditiveMeasurement(), rng.normal(size=8))
        np.testing.assert_array_equal(H, np.eye(8))
        np.testing.assert_array_equal(V, np.eye(8))

    def test_speed_scaled_unit_speeds(self, rng):
        x = rng.normal(size=8)
        x[3] = x[7] = 1.0
        H, V = linearize_measurement(SpeedScaledMeasurement(), x)
        np.testing.assert_array_equal(H, np.eye(8))
        np.testing.assert_allclose(V, np.eye(8))

    def test_speed_scaled_block_diagonal(self):
        x = np.zeros(8)
        x[3], x[7] = 2.0, 0.5
        _, V = linearize_measurement(SpeedScaledMeasurement(), x)
        expected = np.zeros((8, 8))
        expected[:4, :4] = 2.0 * np.eye(4)
        expected[4:, 4:] = 0.5 * np.eye(4)
        np.testing.assert_allclose(V, expected)


class TestEkfPredict:
    def test_nominal_consistency(self, rng):
        lin = Linearization(
            A=rng.normal(size=(2, 2)), Bs=(rng.normal(size=(2, 1)),),
            W=np.eye(2), H=np.eye(2), V=np.eye(2),
        )
        x_k, x_next = rng.normal(size=2), rng.normal(size=2)
        u = rng.normal(size=(1, 1))
        belief = GaussianBelief(mean=x_k.copy(), cov=0.1 * np.eye(2))
        out = ekf_predict(belief, x_k, x_next, u, u, lin, 0.01 * np.eye(2))
        np.testing.assert_allclose(out.mean, x_next)

    def test_identity_propagation(self):
        lin = Linearization(A=np.eye(2), Bs=(np.zeros((2, 1)),), W=np.eye(2),
                            H=np.eye(2), V=np.eye(2))
        belief = GaussianBelief(mean=np.zeros(2), cov=np.zeros((2, 2)))
        out = ekf_predict(belief, np.zeros(2), np.zeros(2), np.zeros((1, 1)),
                          np.zeros((1, 1)), lin, 0.05 * np.eye(2))
        np.testing.assert_allclose(out.cov, 0.05 * np.eye(2))

    def test_scalar_arithmetic(self):
        belief = GaussianBelief(mean=np.zeros(1), cov=np.ones((1, 1)))
        out = ekf_predict(belief, np.zeros(1), np.zeros(1), np.zeros((1, 1)),
                          np.zeros((1, 1)), scalar_lin(0.9), 0.1 * np.eye(1))
        assert out.cov[0, 0] == pytest.approx(0.91)


class TestEkfUpdate:
    def test_halving_update(self):
        prior = GaussianBelief(mean=np.zeros(2), cov=np.eye(2))
        out = ekf_update(prior, np.ones(2), np.zeros(2), np.zeros(2),
                         np.eye(2), np.eye(2), np.eye(2))
        np.testing.assert_allclose(out.cov, 0.5 * np.eye(2), atol=1e-12)
        np.testing.assert_allclose(out.mean, 0.5 * np.ones(2))

    def test_uninformative_measurement(self, rng):
        cov = np.diag([2.0, 0.5])
        prior = GaussianBelief(mean=rng.normal(size=2), cov=cov)
        out = ekf_update(prior, rng.normal(size=2), np.zeros(2), np.zeros(2),
                         np.eye(2), np.eye(2), 1e12 * np.eye(2))
        np.testing.assert_allclose(out.cov, cov, rtol=1e-6)

    def test_matches_gaussian_conditioning_oracle(self, rng):
        # Information-form conditioning: post = (S^-1 + H'R^-1H)^-1, computed
        # independently of the gain-based update.
        for _ in range(10):
            root = rng.normal(size=(2, 2))
            cov = root @ root.T + 0.1 * np.eye(2)
            H = rng.normal(size=(2, 2))
            R = np.diag(rng.uniform(0.1, 2.0, size=2))
            mean = rng.normal(size=2)
            y = rng.normal(size=2)
            out = ekf_update(GaussianBelief(mean=mean, cov=cov), y,
                             np.zeros(2), np.zeros(2), H, np.eye(2), R)
            info_post = np.linalg.inv(np.linalg.inv(cov) + H.T @ np.linalg.inv(R) @ H)
            mean_post = info_post @ (np.linalg.inv(cov) @ mean + H.T @ np.linalg.inv(R) @ y)
            np.testing.assert_allclose(out.cov, info_post, atol=1e-9)
            np.testing.assert_allclose(out.mean, mean_post, atol=1e-8)

    def test_indefinite_innovation_raises_with_context(self):
        from chancegames import NumericalError

        prior = GaussianBelief(mean=np.zeros(2), cov=np.zeros((2, 2)))
        with pytest.raises(NumericalError, match="innovation"):
            ekf_update(prior, np.zeros(2), np.zeros(2), np.zeros(2),
                       np.eye(2), np.eye(2), -np.eye(2))

    def test_never_increases_covariance(self, rng):
        for _ in range(20):
            root = rng.normal(size=(3, 3))
            cov = root @ root.T + 0.01 * np.eye(3)
            H = rng.normal(size=(3, 3))
            out = ekf_update(GaussianBelief(mean=np.zeros(3), cov=cov), rng.normal(size=3),
                             np.zeros(3), np.zeros(3), H, np.eye(3),
                             np.diag(rng.uniform(0.05, 1.0, size=3)))
            gap_eigs = np.linalg.eigvalsh(cov - out.cov)
            assert gap_eigs[0] >= -1e-9
            assert np.all(np.abs(out.cov - out.cov.T) <= 1e-9)


def tiny_spec(n_agents=1, sw=0.05, sv=0.05, s0=0.01, measurement=None, dynamics=None,
              horizon=5, dt=0.1):
    dim = 4 * n_agents
    return SimpleNamespace(
        n_players=n_agents,
        horizon=horizon,
        dt=dt,
        state_dim=dim,
        dynamics=dynamics or UnicycleDynamics(),
        measurement=measurement or AdditiveMeasurement(),
        noise=NoiseSpec(process_cov=sw * np.eye(dim), measurement_cov=sv * np.eye(dim)),
        initial_belief=GaussianBelief(mean=np.zeros(dim), cov=s0 * np.eye(dim)),
    )


class TestPrecomputeCovariances:
    def test_noise_free_degenerate_stays_zero(self):
        spec = tiny_spec(sw=0.0, sv=0.0, s0=0.0)
        means = np.zeros((6, 4))
        controls = np.zeros((5, 1, 2))
        schedule = precompute_covariances(means, controls, spec)
        assert schedule.jittered
        for cov in schedule.covs:
            np.testing.assert_allclose(cov, np.zeros((4, 4)), atol=1e-12)

    def test_control_invariance_bitwise(self, rng):
        spec = tiny_spec()
        means = rng.normal(size=(6, 4))
        a = precompute_covariances(means, np.zeros((5, 1, 2)), spec)
        b = precompute_covariances(means, rng.normal(size=(5, 1, 2)), spec)
        for ca, cb in zip(a.covs, b.covs):
            assert np.array_equal(ca, cb)

    def test_scalar_hand_riccati(self):
        # 1-D plant via duck-typed models; hand-iterated predict/update chain.
        a, sw, sv, s0 = 0.8, 0.2, 0.3, 0.5
        spec = SimpleNamespace(
            horizon=3, dt=1.0, state_dim=1, n_players=1,
            dynamics=LinearDynamics(np.array([[a]]), [np.zeros((1, 1))]),
            measurement=LinearMeasurement(np.eye(1)),
            noise=NoiseSpec(process_cov=np.array([[sw]]), measurement_cov=np.array([[sv]])),
            initial_belief=GaussianBelief(mean=np.zeros(1), cov=np.array([[s0]])),
        )
        schedule = precompute_covariances(np.zeros((4, 1)), np.zeros((3, 1, 1)), spec)
        sig = s0
        expected = [s0]
        for _ in range(3):
            prior = a * sig * a + sw
            sig = prior - prior * prior / (prior + sv)
            expected.append(sig)
        for cov, e in zip(schedule.covs, expected):
            assert cov[0, 0] == pytest.approx(e, abs=1e-12)


class TestRollouts:
    def test_zero_policy_reproduces_nominal(self, rng):
        spec = tiny_spec(n_agents=2, horizon=6, dt=0.15)
        controls = rng.normal(scale=0.3, size=(6, 2, 2))
        nominal = rollout_controls(spec, controls)
        policies = [
            AffineFeedbackPolicy(np.zeros((6, 2, 8)), np.zeros((6, 2))) for _ in range(2)
        ]
        again = rollout_zero_noise(policies, nominal, spec)
        np.testing.assert_array_equal(again.means, nominal.means)
        np.testing.assert_array_equal(again.controls, nominal.controls)

    def test_rest_stays_at_rest(self):
        spec = tiny_spec(n_agents=1, horizon=4)
        nominal = rollout_controls(spec, np.zeros((4, 1, 2)))
        policies = [AffineFeedbackPolicy(np.zeros((4, 2, 4)), np.zeros((4, 2)))]
        out = rollout_zero_noise(policies, nominal, spec)
        np.testing.assert_array_equal(out.means, np.zeros((5, 4)))

    def test_satisfies_zero_noise_dynamics(self, rng):
        spec = tiny_spec(n_agents=2, horizon=8, dt=0.15)
        nominal = rollout_controls(spec, rng.normal(scale=0.4, size=(8, 2, 2)))
        for k in range(8):
            step = spec.dynamics.step(nominal.means[k], nominal.controls[k], np.zeros(8), 0.15)
            np.testing.assert_allclose(nominal.means[k + 1], step, atol=1e-9)

    def test_lqr_closed_loop_oracle(self, rng):
        # Linear 2-state plant driven by an LQR policy: rollout must match the
        # classical closed-loop simulation exactly.
        A = np.array([[1.0, 0.1], [0.0, 1.0]])
        B = np.array([[0.0], [0.1]])
        dyn = LinearDynamics(A, [B])

        class Pad:
            # adapt 1-control plant to the (N, m) control layout with N=1, m=2
            def step(self, state, controls, noise, dt):
                s2 = dyn.step(state[:2], np.asarray(controls)[:, :1], noise[:2], dt)
                return np.concatenate([s2, np.zeros(2)]) + np.concatenate([np.zeros(2), noise[2:]])

            def linearize(self, state, controls, dt):
                A4 = np.zeros((4, 4))
                A4[:2, :2] = A
                B4 = np.zeros((4, 2))
                B4[:2, :1] = B
                return A4, [B4], np.eye(4)

        L = 6
        spec = tiny_spec(dynamics=Pad(), horizon=L)
        x0 = np.array([1.0, -0.5, 0.0, 0.0])
        spec.initial_belief = GaussianBelief(mean=x0, cov=0.01 * np.eye(4))
        nominal = rollout_controls(spec, np.zeros((L, 1, 2)))

        Qs = [np.diag([1.0, 0.1]) for _ in range(L)]
        ls = [np.zeros(2) for _ in range(L)]
        rs = [np.zeros(1) for _ in range(L)]
        gains, ffs = riccati_lqr(A, B, Qs, ls, np.array([[0.5]]), rs,
                                 np.diag([2.0, 0.2]), np.zeros(2))
        gains4 = np.zeros((L, 2, 4))
        ffs4 = np.zeros((L, 2))
        for k in range(L):
            gains4[k, 0, :2] = gains[k][0]
            ffs4[k, 0] = ffs[k][0]
        out = rollout_zero_noise([AffineFeedbackPolicy(gains4, ffs4)], nominal, spec)

        x = x0[:2].copy()
        for k in range(L):
            u = -gains[k] @ (x - nominal.means[k, :2]) - ffs[k]
            np.testing.assert_allclose(out.controls[k, 0, 0], u[0], atol=1e-9)
            x = A @ x + B @ u
            np.testing.assert_allclose(out.means[k + 1, :2], x, atol=1e-9)
