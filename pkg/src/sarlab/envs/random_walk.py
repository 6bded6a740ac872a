"""One-dimensional random walk over a fixed unit of physical time.

Over ``N`` steps of size ``2/N`` the agent moves left or right; the episode
pays 1 at the final step when the final position lies at distance at least 1
from the origin. Under a uniform policy the success probability shrinks to
zero as ``N`` grows, which is the exploration failure mode at small time
scales.
"""

from __future__ import annotations

from fractions import Fraction
from math import comb

import numpy as np

from ..timegrid import EpisodeFinished


def random_walk_success_probability_exact(n: int) -> Fraction:
    """Exact success probability under the uniform +-1 policy.

    Writing ``X`` for the number of right moves, the final position is
    ``(2X - n) * 2/n``, so success means ``X <= n/4`` or ``X >= 3n/4``.
    """
    if n < 2 or n % 2:
        raise ValueError(f"N must be an even integer >= 2, got {n}")
    hits = sum(comb(n, k) for k in range(n + 1) if 4 * k <= n or 4 * k >= 3 * n)
    return Fraction(hits, 2 ** n)


def random_walk_success_probability(n: int) -> float:
    return float(random_walk_success_probability_exact(n))


class RandomWalkEnv:
    """The walk as an environment. Observation is ``[position, time]``.

    Positions are tracked as an integer count of right moves so that the
    success test is exact. Action ``a >= 0`` moves right, ``a < 0`` left.
    """

    def __init__(self, n: int, seed: int = 0):
        if n < 2 or n % 2:
            raise ValueError(f"N must be an even integer >= 2, got {n}")
        self.n = int(n)
        self.delta = 2.0 / n
        self.gamma = 1.0
        self.max_steps = self.n
        self.obs_dim = 2
        self.action_dim = 1
        self.force_dim = 0
        self.clip_count = 0
        self.rng = np.random.default_rng(seed)
        self.steps = 0
        self.rights = 0
        self.done = True
        self.terminated = False
        self.truncated = False

    @property
    def time(self) -> float:
        return self.steps * self.delta

    @property
    def position(self) -> float:
        return (2 * self.rights - self.steps) * self.delta

    def _obs(self):
        return np.array([self.position, self.time])

    def reset(self):
        self.steps = 0
        self.rights = 0
        self.done = self.terminated = self.truncated = False
        return self._obs()

    def mark_decision(self):
        pass

    def step(self, action, force=None):
        if self.done:
            raise EpisodeFinished("step() called on a finished episode; call reset()")
        a = float(np.asarray(action).reshape(-1)[0])
        self.rights += a >= 0
        self.steps += 1
        reward = 0.0
        if self.steps == self.n:
            self.terminated = self.done = True
            if 4 * abs(2 * self.rights - self.n) >= 2 * self.n:
                reward = 1.0
        return self._obs(), reward, self.done


def simulate_uniform_walks(n: int, episodes: int, rng: np.random.Generator) -> np.ndarray:
    """Rewards of ``episodes`` walks driven by uniform random +-1 actions through the env."""
    env = RandomWalkEnv(n)
    out = np.empty(episodes)
    for e in range(episodes):
        env.reset()
        moves = rng.integers(0, 2, size=n) * 2 - 1
        r = 0.0
        for a in moves:
            _, r, _ = env.step((a,))
        out[e] = r
    return out
