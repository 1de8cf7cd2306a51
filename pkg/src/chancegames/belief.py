"""Model linearization and extended Kalman filter belief propagation.

The filter follows the standard predict/update recursion written relative to a
nominal trajectory that satisfies the zero-noise dynamics. Covariances are
symmetrized after every step and the update uses the Joseph form; along a fixed
nominal the covariance schedule is deterministic, independent of both controls
and measurements, so it can be computed once per nominal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError
from .models import GameSpec, GaussianBelief

INNOVATION_MIN_EIG = 1e-12
INNOVATION_JITTER = 1e-12


def symmetrize(mat: np.ndarray) -> np.ndarray:
    return 0.5 * (mat + mat.T)


@dataclass(frozen=True)
class Linearization:
    """Dynamics and measurement Jacobians at one nominal point."""

    A: np.ndarray
    Bs: tuple
    W: np.ndarray
    H: np.ndarray
    V: np.ndarray


def linearize_dynamics(dynamics, nominal_state, nominal_controls, dt):
    """Jacobians (A, Bs, W) of the dynamics at the zero-noise nominal point."""
    return dynamics.linearize(nominal_state, nominal_controls, dt)


def linearize_measurement(measurement, nominal_next_state):
    """Jacobians (H, V) of the measurement model at the zero-noise nominal."""
    return measurement.linearize(nominal_next_state)


def linearize_step(spec: GameSpec, nominal_state, nominal_controls, nominal_next_state) -> Linearization:
    A, Bs, W = linearize_dynamics(spec.dynamics, nominal_state, nominal_controls, spec.dt)
    H, V = linearize_measurement(spec.measurement, nominal_next_state)
    return Linearization(A=A, Bs=tuple(Bs), W=W, H=H, V=V)


def ekf_predict(belief: GaussianBelief, nominal_state, nominal_next_state,
                nominal_controls, controls, lin: Linearization, process_cov) -> GaussianBelief:
    """Prior belief after one linearized dynamics step.

    Mean: nominal_next + A (mean - nominal) + sum_j B_j (u_j - u_nominal_j).
    Covariance: A S A^T + W Q W^T, symmetrized.
    """
    du = np.asarray(controls, dtype=float) - np.asarray(nominal_controls, dtype=float)
    mean = np.asarray(nominal_next_state, dtype=float) + lin.A @ (belief.mean - np.asarray(nominal_state, dtype=float))
    for j, B in enumerate(lin.Bs):
        mean = mean + B @ du[j]
    cov = symmetrize(lin.A @ belief.cov @ lin.A.T + lin.W @ np.asarray(process_cov) @ lin.W.T)
    return GaussianBelief(mean=mean, cov=cov)


def innovation_covariance(prior_cov, H, V, measurement_cov):
    """Innovation covariance with degeneracy guarding.

    Returns ``(S, jittered)``. A PSD-but-singular S gets a tiny diagonal
    jitter before inversion; an indefinite S raises :class:`NumericalError`.
    """
    S = symmetrize(H @ prior_cov @ H.T + V @ np.asarray(measurement_cov) @ V.T)
    min_eig = float(np.linalg.eigvalsh(S)[0])
    if min_eig > INNOVATION_MIN_EIG:
        return S, False
    if min_eig < -1e-9:
        raise NumericalError(
            f"innovation covariance indefinite (min eigenvalue {min_eig:.3e})"
        )
    return S + INNOVATION_JITTER * np.eye(S.shape[0]), True


def kalman_gain(prior_cov, H, V, measurement_cov):
    """Kalman gain for the given prior; returns ``(K, S, jittered)``."""
    S, jittered = innovation_covariance(prior_cov, H, V, measurement_cov)
    K = np.linalg.solve(S, H @ prior_cov).T
    return K, S, jittered


def ekf_update(prior: GaussianBelief, measurement, nominal_measurement,
               nominal_next_state, H, V, measurement_cov) -> GaussianBelief:
    """Posterior belief after conditioning on one measurement.

    The innovation is taken against the linearized measurement prediction
    ``h(nominal, 0) + H (prior_mean - nominal)``. The covariance uses the
    Joseph form, which keeps it symmetric PSD under roundoff.
    """
    K, _, _ = kalman_gain(prior.cov, H, V, measurement_cov)
    predicted = np.asarray(nominal_measurement, dtype=float) + H @ (
        prior.mean - np.asarray(nominal_next_state, dtype=float)
    )
    mean = prior.mean + K @ (np.asarray(measurement, dtype=float) - predicted)
    IKH = np.eye(prior.dim) - K @ H
    cov = symmetrize(IKH @ prior.cov @ IKH.T + K @ V @ np.asarray(measurement_cov) @ V.T @ K.T)
    return GaussianBelief(mean=mean, cov=cov)


@dataclass(frozen=True)
class CovarianceSchedule:
    """Deterministic filter covariances and gains along one nominal."""

    covs: tuple          # L+1 posterior covariances, starting at the initial
    gains: tuple         # L Kalman gains, gains[k] applies at step k+1
    innovations: tuple   # L innovation covariances
    jittered: bool       # True if any innovation needed diagonal jitter


@dataclass(frozen=True)
class BeliefTrajectory:
    """Nominal belief trajectory: means, covariance schedule, and controls."""

    means: np.ndarray     # (L+1, n)
    covs: tuple           # L+1 covariance matrices
    controls: np.ndarray  # (L, N, m)
    schedule: CovarianceSchedule

    @property
    def horizon(self) -> int:
        return self.means.shape[0] - 1


def precompute_covariances(means: np.ndarray, controls: np.ndarray, spec: GameSpec) -> CovarianceSchedule:
    """Propagate the covariance recursion along a nominal trajectory.

    The result depends only on the nominal states (through the Jacobians) and
    the noise covariances, never on controls or measurements.
    """
    covs = [np.asarray(spec.initial_belief.cov, dtype=float)]
    gains = []
    innovations = []
    jittered = False
    for k in range(means.shape[0] - 1):
        A, _, W = linearize_dynamics(spec.dynamics, means[k], controls[k], spec.dt)
        prior = symmetrize(A @ covs[k] @ A.T + W @ spec.noise.process_cov @ W.T)
        H, V = linearize_measurement(spec.measurement, means[k + 1])
        K, S, jit = kalman_gain(prior, H, V, spec.noise.measurement_cov)
        jittered = jittered or jit
        IKH = np.eye(prior.shape[0]) - K @ H
        post = symmetrize(IKH @ prior @ IKH.T + K @ V @ spec.noise.measurement_cov @ V.T @ K.T)
        covs.append(post)
        gains.append(K)
        innovations.append(S)
    return CovarianceSchedule(
        covs=tuple(covs), gains=tuple(gains), innovations=tuple(innovations), jittered=jittered
    )


def _zeros_noise(spec: GameSpec) -> np.ndarray:
    return np.zeros(spec.state_dim)


def rollout_controls(spec: GameSpec, controls: np.ndarray) -> BeliefTrajectory:
    """Zero-noise forward simulation of a fixed control sequence."""
    controls = np.asarray(controls, dtype=float)
    L = spec.horizon
    means = np.empty((L + 1, spec.state_dim))
    means[0] = spec.initial_belief.mean
    zero = _zeros_noise(spec)
    for k in range(L):
        means[k + 1] = spec.dynamics.step(means[k], controls[k], zero, spec.dt)
    schedule = precompute_covariances(means, controls, spec)
    return BeliefTrajectory(means=means, covs=schedule.covs, controls=controls, schedule=schedule)


def rollout_zero_noise(policies, previous: BeliefTrajectory, spec: GameSpec,
                       feedforward_scale: float = 1.0) -> BeliefTrajectory:
    """Closed-loop zero-noise rollout of affine policies around a nominal.

    Controls follow ``u_k = u_nom_k - P_k (x - x_nom_k) - scale * alpha_k``;
    with all noise zero the filter mean tracks the state exactly, so the
    returned means satisfy the zero-noise dynamics by construction.
    """
    L = previous.horizon
    means = np.empty_like(previous.means)
    means[0] = previous.means[0]
    controls = np.empty_like(previous.controls)
    zero = _zeros_noise(spec)
    for k in range(L):
        for j, policy in enumerate(policies):
            controls[k, j] = (
                previous.controls[k, j]
                - policy.gains[k] @ (means[k] - previous.means[k])
                - feedforward_scale * policy.feedforwards[k]
            )
        means[k + 1] = spec.dynamics.step(means[k], controls[k], zero, spec.dt)
    schedule = precompute_covariances(means, controls, spec)
    return BeliefTrajectory(means=means, covs=schedule.covs, controls=controls, schedule=schedule)
