"""Lane merge: solve and inspect
================================

Solves the shipped two-car lane-merge scenario and plots the result with
covariance ellipses. The merging car enters ahead and pulls away while the
through car yields; the chance constraints hold with margin along the way.
"""

from pathlib import Path

import numpy as np

from chancegames import builtin_scenario, convergence_report, outer_solve
from chancegames.plots import plot_trajectory

OUT = Path(__file__).resolve().parent / "output"
OUT.mkdir(exist_ok=True)

cfg = builtin_scenario("merge")
spec = cfg.to_game_spec()
solution = outer_solve(spec, config=cfg.solver_config())
report = convergence_report(solution)

print(f"converged: {report['converged']} in {report['outer_iterations']} outer round(s), "
      f"{report['wall_time_s']:.2f}s")
print(f"max tightened-surrogate violation: {report['final_violation']:.2e}")
print("player costs:", np.round(report["player_costs_per_outer"][-1], 3))

means = solution.trajectory.means
dist = np.linalg.norm(means[:, 0:2] - means[:, 4:6], axis=1)
print("\n step   dist [m]   v0 [m/s]   v1 [m/s]")
for k in range(0, spec.horizon + 1, 4):
    print(f" {k:4d}   {dist[k]:8.2f}   {means[k, 3]:8.2f}   {means[k, 7]:8.2f}")
print("\nThe merging car (agent 0) speeds toward its 3.8 m/s target while the")
print("through car (agent 1) settles near 2.0 m/s, so the gap keeps growing")
print("after the merge instead of hovering at the safety boundary.")

path = OUT / "lane_merge.svg"
plot_trajectory(means, solution.trajectory.covs, cfg, path)
print(f"\nwrote {path}")
