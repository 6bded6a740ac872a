"""Monte Carlo estimates of the total variance of the plain score-function
gradient estimator, plus the AlertThenOff fixtures with known answers."""

from __future__ import annotations

import hashlib
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .envs import AlertThenOffEnv
from .macroact import Kind, RepetitionController, execute_macro_action
from .pg import Agent, decide, trajectory_gradient
from .tinynn import HALF_LOG_2PI, PolicySample


def theorem1_bound(T: float, c: float, delta: float, sigma_min: float) -> float:
    """Lower-bound shape ``T c / (delta sigma_min^2)``."""
    if min(T, c, delta, sigma_min) <= 0:
        raise ValueError("all arguments must be positive")
    return T * c / (delta * sigma_min ** 2)


class Welford:
    """Streaming per-coordinate mean and sum of squared deviations."""

    def __init__(self, dim: int):
        self.n = 0
        self.mean = np.zeros(dim)
        self.m2 = np.zeros(dim)

    def add(self, x):
        self.n += 1
        d = x - self.mean
        self.mean += d / self.n
        self.m2 += d * (x - self.mean)

    def trace(self) -> float:
        """Trace of the unbiased sample covariance."""
        if self.n < 2:
            raise ValueError("need at least two samples")
        return float(self.m2.sum() / (self.n - 1))

    def coord_var(self) -> np.ndarray:
        return self.m2 / (self.n - 1)


# ---------------------------------------------------------------------------
# AlertThenOff fixture policies


class FixturePolicy:
    """Hand-set optimal controller for AlertThenOff with one free parameter.

    ``num ~ N(mu, 1)`` is the only stochastic output; ``off`` is handled by the
    environment's reflex mode. For SAR the radius is ``d_normal`` in the
    normal state and ``d_alert`` when alerted (the distance is ``|s - s_i|``).
    For FiGAR-C every decision lasts ``duration`` seconds.
    """

    aux = False
    action_dim = 2

    def __init__(self, kind: str = "sar", mu: float = 0.0, d_normal: float = 0.5,
                 d_alert: float = 1.0, duration: float = 0.01):
        if kind not in ("sar", "figar_c"):
            raise ValueError("fixture kind must be 'sar' or 'figar_c'")
        self.kind = kind
        self.theta = np.array([float(mu)])
        self.d_normal, self.d_alert, self.duration = d_normal, d_alert, duration

    def sample(self, obs, rng, deterministic=False, alpha=0.0, prev_noise=None) -> PolicySample:
        eps = 0.0 if deterministic else rng.standard_normal()
        num = self.theta[0] + eps
        if self.kind == "sar":
            aux = self.d_alert if obs[0] >= 0.5 else self.d_normal
        else:
            aux = self.duration
        return PolicySample(np.array([0.0, num]), None, -0.5 * eps * eps - HALF_LOG_2PI, aux=aux)

    def log_prob_grad(self, obs, actions, aux_raw=None, weights=None, prev_noise=None,
                      alpha=0.0, entropy_coef=0.0):
        actions = np.asarray(actions, dtype=float).reshape(-1, 2)
        eps = actions[:, 1] - self.theta[0]
        logp = -0.5 * eps * eps - HALF_LOG_2PI
        if weights is None:
            return logp, None
        return logp, np.array([float(np.sum(np.asarray(weights) * eps))])


def fixture_controller(kind: str) -> RepetitionController:
    if kind == "sar":
        return RepetitionController(Kind.SAR, d_max=1.0, t_max=None)
    return RepetitionController(Kind.FIGAR_C, t_max=1.0)


class _Identity:
    def update(self, x):
        pass

    def snapshot(self):
        return None

    def __call__(self, x):
        return np.asarray(x, dtype=float)


def fixture_agent(kind: str, mu: float = 0.0, **kw) -> Agent:
    """An :class:`Agent` wrapping a :class:`FixturePolicy` with raw (unnormalized) states."""
    return Agent(FixturePolicy(kind, mu, **kw), None, _Identity(), fixture_controller(kind))


# ---------------------------------------------------------------------------
# Probe


def _checksum(a: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(a).tobytes()).hexdigest()


def _episode(agent: Agent, env, rng, update_norm: bool):
    obs = env.reset()
    ar = agent.ctrl.kind is Kind.AR_NOISE
    noise = np.zeros(env.action_dim) if ar else None
    steps = []
    while True:
        if agent.value is None:
            s = agent.policy.sample(obs, rng)
            st = execute_macro_action(env, obs, s.action, s.aux, agent.ctrl, None)
            st.aux_raw, st.log_prob = s.aux_raw, s.log_prob
        else:
            st = decide(agent, env, obs, rng, update_norm=update_norm, prev_noise=noise)
            if ar:
                noise = st.noise
        steps.append(st)
        if st.done:
            return steps
        obs = st.next_obs


@dataclass
class ProbeResult:
    trace: float
    n_traj: int
    burn_in: int
    mean_decisions: float
    mean_return: float
    coord_var: np.ndarray = field(repr=False)


def estimate_pg_variance(agent: Agent, env, n_traj: int, burn_in: int = 10, rng=None,
                         detail: bool = False):
    """Trace of the sample covariance of ``G(tau)`` over ``n_traj`` episodes.

    Burn-in episodes only update the observation normalizer, which is then
    frozen. Policy parameters are never modified.
    """
    if n_traj < 2:
        raise ValueError("n_traj must be >= 2")
    rng = np.random.default_rng(0) if rng is None else rng
    before = _checksum(agent.policy.theta)
    for _ in range(burn_in):
        _episode(agent, env, rng, update_norm=True)
    alpha = agent.ctrl.alpha if agent.ctrl.kind is Kind.AR_NOISE else 0.0
    acc = Welford(agent.policy.theta.size)
    decisions, ret = 0, 0.0
    for _ in range(n_traj):
        steps = _episode(agent, env, rng, update_norm=False)
        acc.add(trajectory_gradient(agent.policy, steps, alpha))
        decisions += len(steps)
        ret += sum(s.reward_sum for s in steps)
    if _checksum(agent.policy.theta) != before:
        raise RuntimeError("variance probe modified policy parameters")
    res = ProbeResult(acc.trace(), n_traj, burn_in, decisions / n_traj, ret / n_traj, acc.coord_var())
    return res if detail else res.trace


@dataclass
class VarianceProbeReport:
    kind: str
    deltas: list[float]
    seeds: list[int]
    n_traj: int
    burn_in: int
    traces: dict = field(default_factory=dict)        # (delta, seed) -> trace
    decisions: dict = field(default_factory=dict)     # (delta, seed) -> mean decisions

    def per_delta(self, delta) -> np.ndarray:
        return np.array([self.traces[(delta, s)] for s in self.seeds])

    def mean(self, delta) -> float:
        return float(self.per_delta(delta).mean())

    def ci95(self, delta) -> float:
        v = self.per_delta(delta)
        if len(v) < 2:
            return math.nan
        return float(1.96 * v.std(ddof=1) / math.sqrt(len(v)))

    @property
    def slope(self) -> float:
        x = np.log(self.deltas)
        y = np.log([self.mean(d) for d in self.deltas])
        return float(np.polyfit(x, y, 1)[0])

    def rows(self):
        for d in self.deltas:
            for s in self.seeds:
                yield {"delta": d, "seed": s, "trace_estimate": self.traces[(d, s)], "n_traj": self.n_traj}


def delta_scaling_sweep(agent_factory, env_factory, deltas, n_traj: int, seeds, burn_in: int = 10,
                        kind: str = "") -> VarianceProbeReport:
    """Probe the trace at every ``delta`` with a fresh random policy per seed.

    ``agent_factory(seed)`` and ``env_factory(delta, seed)`` build the pieces.
    The same policy initialisation is used across the grid for a given seed.
    """
    deltas = [float(d) for d in deltas]
    if len(deltas) < 2:
        raise ValueError("need at least two time scales")
    if len(deltas) < 3 or max(deltas) / min(deltas) < 10 - 1e-9:
        warnings.warn("a slope fitted over fewer than 3 points or less than a decade is coarse")
    rep = VarianceProbeReport(kind, deltas, list(seeds), n_traj, burn_in)
    for d in deltas:
        for s in rep.seeds:
            agent = agent_factory(s)
            env = env_factory(d, s)
            res = estimate_pg_variance(agent, env, n_traj, burn_in,
                                       np.random.default_rng([s, 7919]), detail=True)
            rep.traces[(d, s)] = res.trace
            rep.decisions[(d, s)] = res.mean_decisions
    return rep


def fixture_env(delta: float = 1e-3, x: float = 0.01, nu: float = 1e4, seed: int = 0) -> AlertThenOffEnv:
    """AlertThenOff with ``f = 0`` and the reflex switch, as the analytic fixtures assume."""
    return AlertThenOffEnv(delta=delta, x=x, nu=nu, auto_off=True, seed=seed)


def probe_fixture(kind: str, n_traj: int, delta: float = 1e-3, x: float = 0.01, nu: float = 1e4,
                  seed: int = 0, mu: float = 0.0, burn_in: int = 0) -> ProbeResult:
    """Trace estimate on an AlertThenOff fixture. SAR gives about 2, FiGAR-C at least ``1/x``."""
    agent = fixture_agent(kind, mu, duration=x)
    env = fixture_env(delta, x, nu, seed)
    return estimate_pg_variance(agent, env, n_traj, burn_in, np.random.default_rng([seed, 7919]),
                                detail=True)
