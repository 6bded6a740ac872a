"""Cart-pole balancing task used as the desk-scale stand-in for InvertedPendulum.

State is ``[cart position, cart velocity, pole angle, pole angular velocity]``.
The single action is a force command in ``[-3, 3]`` multiplied by
``force_gain`` newtons. The cart runs on a rail of half-length
``rail_limit``; at the ends it stops dead (velocity into the stop is
zeroed). Reward rate is one per second while the pole stays within
``fall_angle`` of upright; leaving that band terminates the episode.
"""

from __future__ import annotations

import math

import numpy as np

from ..timegrid import ContinuousMDP

# Physics constants. MuJoCo's values are unavailable, these follow the classic
# cart-pole so that an untrained policy falls in roughly one second.
PENDULUM_CONSTANTS = {
    "gravity": 9.8,          # m/s^2
    "cart_mass": 1.0,        # kg
    "pole_mass": 0.1,        # kg
    "half_length": 0.5,      # m, pivot to pole centre of mass
    "force_gain": 10.0 / 3.0,  # N per unit action
    "action_bound": 3.0,
    "fall_angle": 0.2,       # rad
    "init_noise": 0.01,      # half-width of the uniform initial-state box
    "rail_limit": 1.0,       # m, cart travel on either side of the origin
}


def pendulum_mdp(delta0: float = 0.04, base_steps: int = 1000, gamma: float = 0.99,
                 **overrides) -> ContinuousMDP:
    c = dict(PENDULUM_CONSTANTS)
    unknown = set(overrides) - set(c)
    if unknown:
        raise KeyError(f"unknown pendulum constants: {sorted(unknown)}")
    c.update(overrides)
    g, mc, mp, l = c["gravity"], c["cart_mass"], c["pole_mass"], c["half_length"]
    gain, fall, noise, rail = c["force_gain"], c["fall_angle"], c["init_noise"], c["rail_limit"]
    total = mc + mp
    pml = mp * l

    def dynamics(s, a, force=None):
        _, v, th, om = s
        f = gain * a[0]
        if force is not None:
            f += force[0]
        cos, sin = math.cos(th), math.sin(th)
        tmp = (f + pml * om * om * sin) / total
        th_acc = (g * sin - cos * tmp) / (l * (4.0 / 3.0 - mp * cos * cos / total))
        x_acc = tmp - pml * th_acc * cos / total
        return np.array([v, x_acc, om, th_acc])

    def constrain(s):
        x, v = s[0], s[1]
        if x > rail or x < -rail:
            s = s.copy()
            s[0] = rail if x > 0 else -rail
            if v * s[0] > 0:
                s[1] = 0.0
        return s

    def reward_rate(s, a):
        return 1.0

    def initial(rng):
        return rng.uniform(-noise, noise, size=4)

    def terminal(s):
        return abs(s[2]) > fall

    bound = c["action_bound"]
    return ContinuousMDP(
        state_dim=4, action_dim=1, action_low=[-bound], action_high=[bound],
        dynamics=dynamics, reward_rate=reward_rate, initial_sampler=initial,
        terminal_predicate=terminal, horizon=base_steps * delta0, gamma=gamma,
        base_delta=delta0, force_dim=1, constrain=constrain,
    )
