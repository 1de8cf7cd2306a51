"""Vehicle dynamics and belief propagation
==========================================

Walks through the building blocks below the game solver: the unicycle model,
the two measurement models, and the filter covariance schedule along a
nominal trajectory.
"""

import numpy as np

from chancegames import builtin_scenario, unicycle_step
from chancegames.belief import rollout_controls

# A single vehicle at 5 m/s turning gently for one second.
state = np.array([0.0, 0.0, 0.0, 5.0])
dt = 0.1
print("unicycle rollout (x, y, heading, speed):")
for k in range(10):
    state = unicycle_step(state, [0.3, 0.0], np.zeros(4), dt)
    if k % 3 == 2:
        print(f"  t={dt * (k + 1):.1f}s ->", np.round(state, 3))

# The merge scenario measures state with speed-scaled noise: the faster an
# agent drives, the blurrier its measurements, so the filter covariance
# settles at a level that grows with the nominal speed.
cfg = builtin_scenario("merge")
spec = cfg.to_game_spec()
nominal = rollout_controls(spec, np.zeros((spec.horizon, 2, 2)))

print("\nfilter covariance schedule along the coasting nominal (merge):")
print("  step   agent-0 position sigma   agent-1 position sigma")
for k in (0, 5, 10, 15, 20):
    cov = np.asarray(nominal.covs[k])
    s0 = np.sqrt(cov[0, 0])
    s1 = np.sqrt(cov[4, 4])
    print(f"  {k:4d}   {s0:20.3f}   {s1:22.3f}")

print("\nThe schedule is deterministic: it depends on the nominal states and")
print("noise covariances only, never on controls or measurement realizations,")
print("so the solver precomputes it once per nominal trajectory.")
perturbed = rollout_controls(spec, np.zeros((spec.horizon, 2, 2)))
same = all(
    np.array_equal(a, b) for a, b in zip(nominal.covs, perturbed.covs)
)
print(f"bitwise identical across recomputation: {same}")
