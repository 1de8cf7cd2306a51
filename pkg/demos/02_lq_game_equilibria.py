"""Feedback Nash equilibria of linear-quadratic games
=====================================================

Solves a two-player LQ game directly and checks the equilibrium property:
no player can improve by deviating unilaterally from their feedback policy.
"""

import numpy as np

from chancegames import LQGameStage, evaluate_policies, solve_lq_game

rng = np.random.default_rng(0)

# Two point masses on a line; each controls its own acceleration. Player 0
# wants both near the origin, player 1 wants separation -- a genuine conflict.
n, L = 4, 12
A = np.eye(n)
A[0, 1] = A[2, 3] = 0.1
B0 = np.zeros((n, 1)); B0[1, 0] = 0.1
B1 = np.zeros((n, 1)); B1[3, 0] = 0.1

Q0 = np.diag([2.0, 0.1, 2.0, 0.1])          # player 0: regulate everyone
Q1 = np.array([[1.0, 0, -1.0, 0],           # player 1: keep distance from 0
               [0, 0.1, 0, 0],
               [-1.0, 0, 1.0, 0],
               [0, 0, 0, 0.1]]) * 1.5
R = np.array([[1.0]])

stages = [
    LQGameStage(
        A=A, Bs=(B0, B1), Qs=(Q0, Q1), ls=(np.zeros(n), np.zeros(n)),
        Rs=((R, np.zeros((1, 1))), (np.zeros((1, 1)), R)),
        rs=((np.zeros(1), np.zeros(1)), (np.zeros(1), np.zeros(1))),
    )
    for _ in range(L)
]
policies = solve_lq_game(stages, (Q0, Q1), (np.zeros(n), np.zeros(n)))

x0 = np.array([1.0, 0.0, -0.5, 0.0])
values = evaluate_policies(stages, (Q0, Q1), (np.zeros(n), np.zeros(n)), policies, x0)
print("equilibrium values:", np.round(values, 4))
print("first-stage gains:")
for i, pol in enumerate(policies):
    print(f"  player {i}:", np.round(pol.gains[0], 3))

# Unilateral deviations: nudge one player's control at one stage and re-roll.
print("\nunilateral deviation never helps (cost change, should be >= 0):")
for i in range(2):
    x = x0.copy()
    dxs = [x.copy()]
    for k, stage in enumerate(stages):
        du = [-p.gains[k] @ x - p.feedforwards[k] for p in policies]
        x = stage.A @ x + sum(b @ u for b, u in zip(stage.Bs, du))
        dxs.append(x.copy())
    for eps in (0.05, -0.05):
        du_dev = -policies[i].gains[3] @ dxs[3] - policies[i].feedforwards[3] + eps
        deviated = evaluate_policies(
            stages, (Q0, Q1), (np.zeros(n), np.zeros(n)), policies, x0,
            controls_override={(3, i): du_dev},
        )
        print(f"  player {i}, eps={eps:+.2f}: {deviated[i] - values[i]:+.6f}")
