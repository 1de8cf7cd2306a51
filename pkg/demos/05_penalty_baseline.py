"""Soft-penalty baseline vs. the adaptive outer loop
====================================================

The baseline mode mimics handling constraints with one fixed quadratic
penalty weight. A small weight under-enforces (the planned cars end up closer
than allowed); the adaptive mode needs no tuning. Sweep the weight to see how
sensitive the baseline is.
"""

import numpy as np

from chancegames import SolverConfig, builtin_scenario, outer_solve
from chancegames.constraints import linearize_constraints, surrogate_value

cfg = builtin_scenario("merge")
spec = cfg.to_game_spec()

solution = outer_solve(spec, config=cfg.solver_config())
d_al = np.linalg.norm(
    solution.trajectory.means[:, 0:2] - solution.trajectory.means[:, 4:6], axis=1
).min()
print(f"adaptive mode:   converged={solution.converged}  "
      f"min planned distance {d_al:.2f} m  violation {solution.final_violation:.1e}")

print("\nfixed-penalty baseline sweep:")
print(" weight   converged   min distance   max surrogate violation")
for weight in (0.3, 1.0, 10.0, 100.0, 400.0):
    config = SolverConfig(mode="fixed-penalty", fixed_penalty_weight=weight)
    sol = outer_solve(spec, config=config)
    m = sol.trajectory.means
    dmin = np.linalg.norm(m[:, 0:2] - m[:, 4:6], axis=1).min()
    print(f" {weight:6.1f}   {str(sol.converged):9s}   {dmin:9.2f} m    "
          f"{sol.final_violation:.3e}")

print("\nWeight 1 leaves the surrogate violated (the planned cars sit closer")
print("than the tightened bound allows): the penalty is too weak to matter.")
print("Large weights over-regularize toward the constraint boundary instead.")
print("The adaptive outer loop lands on a safe plan without any tuning.")
