"""Stochastic perturbations and the hidden hold-time penalty.

Wrappers draw from their own generator, so an inner environment sees the
same random stream whether or not it is wrapped.
"""

from __future__ import annotations

import enum

import numpy as np


class Mode(enum.Enum):
    EXTERNAL_FORCE = "ext_force"
    PERCEPTIBLE_FORCE = "percept_force"
    ACTION_NOISE = "act_noise"


class EnvWrapper:
    """Forwards everything not overridden to the inner env."""

    def __init__(self, inner):
        self.inner = inner

    def __getattr__(self, name):
        return getattr(self.inner, name)

    def reset(self):
        return self.inner.reset()

    def mark_decision(self):
        self.inner.mark_decision()

    def step(self, action, force=None):
        return self.inner.step(action, force)

    @property
    def unwrapped(self):
        return getattr(self.inner, "unwrapped", self.inner)


class StochasticityWrapper(EnvWrapper):
    """Perturbations sampled at decision boundaries.

    ``EXTERNAL_FORCE``: with probability ``p_ext`` a force ``N(0, sigma_ext^2)``
    acts during the first micro-step of the decision.
    ``PERCEPTIBLE_FORCE``: same with ``sigma_ext2``, and the force applied in the
    latest micro-step, clipped to [-1, 1], is appended to the observation.
    ``ACTION_NOISE``: with probability ``p_act`` the first micro-step executes
    ``action + N(0, sigma_act^2)``.
    """

    def __init__(self, inner, mode: Mode | str, *, p_ext: float = 0.05, sigma_ext: float = 1.0,
                 sigma_ext2: float = 3.0, p_act: float = 0.05, sigma_act: float = 3.0,
                 seed: int = 0):
        super().__init__(inner)
        self.mode = Mode(mode)
        for name, p in (("p_ext", p_ext), ("p_act", p_act)):
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {p}")
        if min(sigma_ext, sigma_ext2, sigma_act) < 0:
            raise ValueError("noise scales must be non-negative")
        self.p_ext, self.sigma_ext, self.sigma_ext2 = p_ext, sigma_ext, sigma_ext2
        self.p_act, self.sigma_act = p_act, sigma_act
        self.wrng = np.random.default_rng(seed)
        self.force_width = inner.force_dim
        if self.mode is not Mode.ACTION_NOISE and self.force_width == 0:
            raise ValueError("force modes need an env that accepts external forces")
        self.pending_force = None
        self.pending_noise = None
        self.last_force = None
        self.decision_force = None
        if self.mode is Mode.PERCEPTIBLE_FORCE:
            self.obs_dim = inner.obs_dim + self.force_width

    def _augment(self, obs, force):
        if self.mode is not Mode.PERCEPTIBLE_FORCE:
            return obs
        shown = np.zeros(self.force_width) if force is None else np.clip(force, -1.0, 1.0)
        return np.concatenate([obs, shown])

    def reset(self):
        self.pending_force = self.pending_noise = self.last_force = self.decision_force = None
        return self._augment(self.inner.reset(), None)

    def mark_decision(self):
        self.inner.mark_decision()
        self.pending_force = self.pending_noise = None
        if self.mode is Mode.ACTION_NOISE:
            if self.p_act > 0 and self.wrng.random() < self.p_act:
                self.pending_noise = self.wrng.normal(0.0, self.sigma_act, self.inner.action_dim)
        elif self.p_ext > 0 and self.wrng.random() < self.p_ext:
            sd = self.sigma_ext if self.mode is Mode.EXTERNAL_FORCE else self.sigma_ext2
            self.pending_force = self.wrng.normal(0.0, sd, self.force_width)
        self.decision_force = self.pending_force

    def step(self, action, force=None):
        f = self.pending_force
        self.pending_force = None
        if force is not None:
            f = force if f is None else f + force
        if self.pending_noise is not None:
            action = np.asarray(action, dtype=float) + self.pending_noise
            self.pending_noise = None
        self.last_force = f
        obs, r, done = self.inner.step(action, f)
        return self._augment(obs, f), r, done


class HoldPenaltyWrapper(EnvWrapper):
    """Adds ``r_penalty`` once per hold when the same action has been executed
    for ``t_thres`` seconds. The hold counter is internal state only.

    Actions are compared for exact equality, which is how a repeated
    macro-action shows up at the micro-step level.
    """

    def __init__(self, inner, t_thres: float = 0.04, r_penalty: float = -1.0):
        super().__init__(inner)
        if t_thres <= 0:
            raise ValueError("t_thres must be positive")
        self.t_thres = float(t_thres)
        self.r_penalty = float(r_penalty)
        self._last = None
        self._held = 0
        self._charged = False
        self.penalty_count = 0

    def reset(self):
        self._last, self._held, self._charged = None, 0, False
        return self.inner.reset()

    def step(self, action, force=None):
        a = np.array(action, dtype=float)
        if self._last is not None and np.array_equal(a, self._last):
            self._held += 1
        else:
            self._last, self._held, self._charged = a, 1, False
        obs, r, done = self.inner.step(action, force)
        if not self._charged and self._held * self.inner.delta >= self.t_thres - 1e-12:
            self._charged = True
            self.penalty_count += 1
            r += self.r_penalty
        return obs, r, done
