"""Chance-constrained stochastic dynamic games.

Feedback Nash equilibrium strategies for N-player nonlinear stochastic games
with shared noisy measurements and probabilistic safety constraints, solved by
an augmented-Lagrangian outer loop around an iterative linear-quadratic
stochastic game inner loop, plus closed-loop Monte Carlo evaluation.
"""

__version__ = "0.1.0"

from .belief import (
    BeliefTrajectory,
    CovarianceSchedule,
    Linearization,
    ekf_predict,
    ekf_update,
    linearize_dynamics,
    linearize_measurement,
    precompute_covariances,
    rollout_controls,
    rollout_zero_noise,
)
from .constraints import (
    ChanceConstraintSpec,
    DiscObstacle,
    LinearizedConstraint,
    PolygonObstacle,
    chance_violation_probability,
    inverse_erf,
    linearize_constraint,
    linearize_constraints,
    obstacle_value,
    proximity_value,
    safety_margin_rho,
    standard_normal_quantile,
    surrogate_value,
)
from .auglag import (
    MultiplierState,
    al_quadratic_terms,
    max_surrogate_violation,
    penalty_gate,
    update_multipliers,
)
from .errors import (
    ChanceGamesError,
    DegenerateGradientError,
    EquilibriumDegeneracyError,
    InvalidInputError,
    NumericalError,
    ScenarioError,
)
from .lqgame import (
    AffineFeedbackPolicy,
    LQGameStage,
    apply_policy,
    evaluate_policies,
    solve_lq_game,
)
from .models import (
    AdditiveMeasurement,
    GameSpec,
    GaussianBelief,
    NoiseSpec,
    PlayerCost,
    SpeedScaledMeasurement,
    UnicycleDynamics,
    additive_measurement,
    joint_step,
    running_cost,
    speed_scaled_measurement,
    terminal_cost,
    unicycle_step,
)
from .montecarlo import MonteCarloReport, TrialResult, run_trials, simulate_closed_loop
from .scenarios import (
    ScenarioConfig,
    builtin_scenario,
    canonical_yaml,
    load_scenario,
    save_scenario,
)
from .solver import (
    Solution,
    SolverConfig,
    convergence_report,
    inner_solve,
    outer_solve,
    quadraticize_costs,
)
