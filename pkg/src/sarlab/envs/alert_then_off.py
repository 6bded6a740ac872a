"""AlertThenOff: an alert must be switched off shortly after it fires.

The episode lasts one second. At a random time the state flips from normal
(0) to alerted (1) and the agent then has ``x`` seconds to send ``off = 1``.
Sending off while normal, or missing the window, costs ``-nu`` and ends the
episode. At the end the agent receives a standard normal reward ``xi``. The
action is ``(off, num)``; ``num`` only feeds the optional reward stream
``f(num) * delta``.
"""

from __future__ import annotations

import math

import numpy as np

from ..timegrid import EpisodeFinished

_EPS = 1e-12


class AlertThenOffEnv:
    """Parameters
    ----------
    delta : micro-step length, ``1/delta`` must be (close to) an integer.
    x : reaction window in seconds, must exceed ``delta``.
    nu : penalty magnitude.
    f : reward rate as a function of ``num``; ``None`` means zero.
    auto_off : if true the ``off`` entry is ignored and replaced by the
        reflex ``off = s`` evaluated at every micro-step. Used by the
        analytic fixtures, where the optimal switch is fixed by hand.
    flip_sampler : callable ``rng -> flip time``; uniform on [0, 1] by default.
    """

    def __init__(self, delta: float = 1e-3, x: float = 0.01, nu: float = 1e4, f=None,
                 auto_off: bool = False, flip_sampler=None, seed: int = 0):
        if not 0 < delta < x:
            raise ValueError(f"need 0 < delta < x, got delta={delta}, x={x}")
        n = round(1.0 / delta)
        if abs(n * delta - 1.0) > 1e-9:
            raise ValueError(f"1/delta must be an integer, got delta={delta}")
        if nu <= 0:
            raise ValueError("nu must be positive")
        self.delta = float(delta)
        self.x = float(x)
        self.nu = float(nu)
        self.f = f
        self.auto_off = auto_off
        self.flip_sampler = flip_sampler
        self.n = n
        self.max_steps = n
        self.gamma = 1.0
        self.obs_dim = 1
        self.action_dim = 2
        self.force_dim = 0
        self.clip_count = 0
        self.rng = np.random.default_rng(seed)
        self.steps = 0
        self.s = 0
        self.flip_time = math.nan
        self.flip_step = 0
        self.flipped = False
        self.penalties = 0
        self.done = True
        self.terminated = False
        self.truncated = False

    @property
    def time(self) -> float:
        return self.steps * self.delta

    def _obs(self):
        return np.array([float(self.s)])

    def reset(self):
        ft = self.flip_sampler(self.rng) if self.flip_sampler else self.rng.uniform(0.0, 1.0)
        self.flip_time = float(ft)
        # first step count whose time reaches the flip
        self.flip_step = max(0, math.ceil(self.flip_time / self.delta - 1e-9))
        self.steps = 0
        self.s = 0
        self.flipped = False
        self.done = self.terminated = self.truncated = False
        self._maybe_flip()
        return self._obs()

    def mark_decision(self):
        pass

    def _maybe_flip(self):
        if not self.flipped and self.steps >= self.flip_step and self.steps < self.n:
            self.flipped = True
            self.s = 1

    def _rate(self, action) -> float:
        if self.f is None:
            return 0.0
        return float(self.f(float(action[1]))) * self.delta

    def _off(self, action) -> bool:
        if self.auto_off:
            return self.s == 1
        return float(action[0]) > 0.5

    def step(self, action, force=None):
        if self.done:
            raise EpisodeFinished("step() called on a finished episode; call reset()")
        reward = self._rate(action)
        off = self._off(action)
        self.steps += 1
        if off:
            if self.s == 0:
                return self._finish(reward - self.nu, penalty=True)
            self.s = 0
        self._maybe_flip()
        if self.s == 1 and self.time > self.flip_time + self.x + _EPS:
            return self._finish(reward - self.nu, penalty=True)
        if self.steps >= self.n:
            return self._finish(reward + self.rng.standard_normal())
        return self._obs(), reward, False

    def _finish(self, reward, penalty=False):
        self.penalties += penalty
        self.terminated = self.done = True
        return self._obs(), float(reward), True

    # Fast path used by the macro-action executor. A quiet step leaves the
    # observation unchanged, cannot end the episode and pays a constant reward.
    def quiet_steps(self, action) -> int:
        if self.done or self.s != 0 or self._off(action):
            return 0
        stop = self.n - 1
        if not self.flipped:
            stop = min(stop, self.flip_step - 1)
        return max(0, stop - self.steps)

    def advance_quiet(self, k: int, action) -> float:
        """Advance ``k`` quiet steps at once and return the per-step reward."""
        if k > self.quiet_steps(action):
            raise ValueError("advance_quiet past the quiet stretch")
        self.steps += k
        return self._rate(action)


def optimal_off(obs) -> float:
    """The hand-coded optimal switch: off exactly when alerted."""
    return float(obs[0])
