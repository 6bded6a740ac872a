"""Planar point mass driven towards a goal (double integrator)."""

from __future__ import annotations

import numpy as np

from ..timegrid import ContinuousMDP


def point_mass_mdp(delta0: float = 0.02, base_steps: int = 1000, gamma: float = 0.99,
                   mass: float = 1.0, goal=(0.5, 0.5), init_noise: float = 0.1,
                   action_bound: float = 1.0) -> ContinuousMDP:
    goal = np.asarray(goal, dtype=float)

    def dynamics(s, a, force=None):
        acc = np.asarray(a, dtype=float) / mass
        if force is not None:
            acc = acc + np.asarray(force) / mass
        return np.concatenate([s[2:], acc])

    def exact_step(s, a, force, dt):
        acc = np.asarray(a, dtype=float) / mass
        if force is not None:
            acc = acc + np.asarray(force) / mass
        p, v = s[:2], s[2:]
        return np.concatenate([p + v * dt + 0.5 * acc * dt * dt, v + acc * dt])

    def reward_rate(s, a):
        return -float(np.hypot(s[0] - goal[0], s[1] - goal[1]))

    def initial(rng):
        s = np.zeros(4)
        s[:2] = rng.uniform(-init_noise, init_noise, size=2)
        return s

    return ContinuousMDP(
        state_dim=4, action_dim=2,
        action_low=[-action_bound] * 2, action_high=[action_bound] * 2,
        dynamics=dynamics, reward_rate=reward_rate, initial_sampler=initial,
        terminal_predicate=lambda s: False, horizon=base_steps * delta0,
        gamma=gamma, base_delta=delta0, force_dim=2, exact_step=exact_step,
    )
