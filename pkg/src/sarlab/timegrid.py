"""Continuous-time MDP descriptions and their fixed-step discretization."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable

import numpy as np


class Integrator(enum.Enum):
    EULER = "euler"
    EXACT = "exact"


@dataclass
class ContinuousMDP:
    """A deterministic continuous-time control problem.

    ``dynamics(s, a, w)`` returns ds/dt, where ``w`` is an optional external
    force vector of length ``force_dim`` (``None`` when no force acts).
    ``reward_rate(s, a)`` is in reward units per second. ``exact_step``, when
    given, advances the state over an interval in closed form and is used by
    the :attr:`Integrator.EXACT` scheme. ``constrain(s)``, when given, maps
    the integrated state back into its admissible set (joint limits).
    """

    state_dim: int
    action_dim: int
    action_low: np.ndarray
    action_high: np.ndarray
    dynamics: Callable
    reward_rate: Callable
    initial_sampler: Callable
    terminal_predicate: Callable
    horizon: float
    gamma: float = 0.99
    base_delta: float = 0.05
    force_dim: int = 0
    exact_step: Callable | None = None
    constrain: Callable | None = None

    def __post_init__(self):
        self.action_low = np.asarray(self.action_low, dtype=float).reshape(self.action_dim)
        self.action_high = np.asarray(self.action_high, dtype=float).reshape(self.action_dim)
        if self.horizon <= 0 or self.base_delta <= 0:
            raise ValueError("horizon and base_delta must be positive")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in (0, 1], got {self.gamma}")


def effective_discount(gamma0: float, delta: float, delta0: float) -> float:
    """Per-step discount at time scale ``delta`` keeping the physical horizon of ``gamma0`` at ``delta0``."""
    if not 0.0 < gamma0 <= 1.0:
        raise ValueError(f"gamma0 must lie in (0, 1], got {gamma0}")
    if delta <= 0 or delta0 <= 0:
        raise ValueError("time scales must be positive")
    if delta == delta0:
        return float(gamma0)
    return float(gamma0 ** (delta / delta0))


def horizon_steps(base_steps: int, delta: float, delta0: float) -> int:
    """Episode length at ``delta`` covering the same physical time as ``base_steps`` at ``delta0``."""
    if base_steps < 1:
        raise ValueError("base_steps must be >= 1")
    if delta <= 0 or delta0 <= 0:
        raise ValueError("time scales must be positive")
    return max(1, int(round(base_steps * delta0 / delta)))


class EpisodeFinished(RuntimeError):
    """Raised when stepping an environment whose episode has ended."""


class DiscretizedEnv:
    """A :class:`ContinuousMDP` sampled every ``delta`` seconds.

    Rewards are ``reward_rate * delta`` (already scaled), the discount is
    ``gamma0 ** (delta / delta0)`` and the episode is truncated after
    ``max_steps`` micro-steps. Time is kept as an integer step count.
    """

    def __init__(self, mdp: ContinuousMDP, delta: float, seed: int = 0,
                 integrator: Integrator = Integrator.EULER,
                 max_steps: int | None = None, gamma: float | None = None):
        if delta <= 0:
            raise ValueError(f"delta must be positive, got {delta}")
        if integrator is Integrator.EXACT and mdp.exact_step is None:
            raise ValueError("exact integrator requested but the MDP has no closed form")
        self.mdp = mdp
        self.delta = float(delta)
        self.integrator = integrator
        self.gamma = effective_discount(mdp.gamma, delta, mdp.base_delta) if gamma is None else float(gamma)
        if max_steps is None:
            max_steps = max(1, int(round(mdp.horizon / self.delta)))
        self.max_steps = int(max_steps)
        self.rng = np.random.default_rng(seed)
        self.obs_dim = mdp.state_dim
        self.action_dim = mdp.action_dim
        self.force_dim = mdp.force_dim
        self.clip_count = 0
        self.steps = 0
        self.state = None
        self.done = True
        self.terminated = False
        self.truncated = False

    @property
    def time(self) -> float:
        return self.steps * self.delta

    def reset(self) -> np.ndarray:
        self.state = np.asarray(self.mdp.initial_sampler(self.rng), dtype=float)
        self.steps = 0
        self.terminated = bool(self.mdp.terminal_predicate(self.state))
        self.truncated = False
        self.done = self.terminated
        return self.state.copy()

    def mark_decision(self):
        """Hook called by the macro-action executor at each decision boundary."""

    def step(self, action, force=None):
        if self.done:
            raise EpisodeFinished("step() called on a finished episode; call reset()")
        a = np.asarray(action, dtype=float)
        lo, hi = self.mdp.action_low, self.mdp.action_high
        if np.any(a < lo) or np.any(a > hi):
            self.clip_count += 1
            a = np.clip(a, lo, hi)
        s = self.state
        reward = self.mdp.reward_rate(s, a) * self.delta
        if self.integrator is Integrator.EXACT:
            s_next = self.mdp.exact_step(s, a, force, self.delta)
        else:
            s_next = s + self.delta * self.mdp.dynamics(s, a, force)
        if self.mdp.constrain is not None:
            s_next = self.mdp.constrain(s_next)
        self.state = np.asarray(s_next, dtype=float)
        self.steps += 1
        self.terminated = bool(self.mdp.terminal_predicate(self.state))
        self.truncated = not self.terminated and self.steps >= self.max_steps
        self.done = self.terminated or self.truncated
        return self.state.copy(), float(reward), self.done


def discretize(mdp: ContinuousMDP, delta: float, seed: int = 0, *,
               integrator: Integrator = Integrator.EULER,
               base_steps: int | None = None) -> DiscretizedEnv:
    """Close ``mdp`` over time scale ``delta``.

    With ``base_steps`` the horizon is ``base_steps`` micro-steps at the base
    time scale, rescaled to ``delta``; otherwise ``round(horizon / delta)``.
    """
    if delta <= 0:
        raise ValueError(f"delta must be positive, got {delta}")
    max_steps = None
    if base_steps is not None:
        max_steps = horizon_steps(base_steps, delta, mdp.base_delta)
    return DiscretizedEnv(mdp, delta, seed=seed, integrator=integrator, max_steps=max_steps)


__all__ = [
    "ContinuousMDP", "DiscretizedEnv", "EpisodeFinished", "Integrator",
    "discretize", "effective_discount", "horizon_steps",
]
