"""Policy-gradient training at decision granularity.

A decision holds its action for a variable number of micro-steps, so every
decision carries its own discount ``g_i = gamma**n_i`` (the carry discount).
GAE and returns chain decisions with these per-decision discounts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .macroact import DecisionStep, Kind, RepetitionController, execute_macro_action
from .tinynn import Adam, GaussianPolicy, Normalizer, NumericalError, ValueNet


class ReturnScaler:
    """Divides rewards by the running std of the discounted return."""

    def __init__(self, rate: float = 1e-3, clip: float = 10.0):
        self.norm = Normalizer(1, rate=rate, eps=1e-8, clip=None)
        self.clip = clip
        self.ret = 0.0

    def __call__(self, r: float, g: float, done: bool) -> float:
        self.ret = self.ret * g + r
        self.norm.update((self.ret,))
        out = r / math.sqrt(self.norm.var[0] + self.norm.eps)
        if done:
            self.ret = 0.0
        return max(-self.clip, min(self.clip, out))

    def state(self) -> dict:
        return {"ret": self.ret, "norm": self.norm.state(), "clip": self.clip}


@dataclass
class Agent:
    policy: GaussianPolicy
    value: ValueNet
    obs_norm: Normalizer
    ctrl: RepetitionController = field(default_factory=RepetitionController)
    reward_scaler: ReturnScaler | None = None

    @classmethod
    def build(cls, obs_dim: int, action_dim: int, ctrl: RepetitionController, rng,
              hidden=(256, 256), init_log_std: float = 0.0, scale_rewards: bool = True,
              norm_rate: float = 1e-3) -> "Agent":
        policy = GaussianPolicy(obs_dim, action_dim, aux=ctrl.uses_aux, hidden=hidden, rng=rng,
                                init_log_std=init_log_std)
        value = ValueNet(obs_dim, hidden, rng=rng)
        return cls(policy, value, Normalizer(obs_dim, rate=norm_rate), ctrl,
                   ReturnScaler() if scale_rewards else None)


# ---------------------------------------------------------------------------
# Rollouts


@dataclass
class Rollout:
    """Decisions in collection order, possibly spanning several episodes."""

    steps: list[DecisionStep]
    obs: np.ndarray            # normalized policy inputs
    actions: np.ndarray
    aux_raw: np.ndarray | None
    prev_noise: np.ndarray | None
    log_probs: np.ndarray
    values: np.ndarray
    rewards: np.ndarray        # scaled aggregated rewards used for learning
    raw_rewards: np.ndarray    # aggregated rewards as returned by the executor
    carry: np.ndarray
    terminated: np.ndarray
    truncated: np.ndarray
    next_values: np.ndarray    # V(s') where bootstrapping is needed, nan elsewhere
    episode_ends: list[int]    # indices of decisions that ended an episode
    episode_returns: list[float]
    micro_steps: int
    physical_time: float

    def __len__(self):
        return len(self.steps)

    @property
    def mean_hold(self) -> float:
        return self.physical_time / max(1, len(self.steps))


@dataclass
class AdvantageBatch:
    obs: np.ndarray
    actions: np.ndarray
    aux_raw: np.ndarray | None
    prev_noise: np.ndarray | None
    old_log_probs: np.ndarray
    values: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray
    alpha: float = 0.0

    def __len__(self):
        return len(self.advantages)


def decide(agent: Agent, env, obs, rng, *, update_norm=True, deterministic=False,
           prev_noise=None, fast=True) -> DecisionStep:
    """One decision: update the normalizer, sample, then hold via the executor."""
    ctrl = agent.ctrl
    if update_norm:
        agent.obs_norm.update(obs)
    snap = agent.obs_norm.snapshot()
    x = snap(obs)
    alpha = ctrl.alpha if ctrl.kind is Kind.AR_NOISE and not deterministic else 0.0
    s = agent.policy.sample(x, rng, deterministic=deterministic, alpha=alpha, prev_noise=prev_noise)
    aux = s.aux
    if aux is None and ctrl.uses_aux:
        aux = ctrl.map_aux(s.aux_raw)
    step = execute_macro_action(env, obs, s.action, aux, ctrl, snap, fast=fast)
    step.aux_raw = s.aux_raw
    step.log_prob = s.log_prob
    step.noise = s.noise
    step.prev_noise = None if prev_noise is None else np.array(prev_noise)
    return step


class Collector:
    """Keeps an environment running across rollouts."""

    def __init__(self, env, agent: Agent, rng: np.random.Generator, fast: bool = True):
        self.env, self.agent, self.rng, self.fast = env, agent, rng, fast
        self.obs = env.reset()
        self.ar = agent.ctrl.kind is Kind.AR_NOISE
        self.noise = np.zeros(env.action_dim) if self.ar else None
        self.ep_return = 0.0
        self.total_decisions = 0
        self.total_micro = 0
        self.total_time = 0.0

    def collect(self, n: int) -> Rollout:
        if n < 1:
            raise ValueError("n_decisions must be >= 1")
        agent, env = self.agent, self.env
        steps, rewards, values, nexts = [], [], [], []
        ends, returns = [], []
        micro = 0
        for i in range(n):
            step = decide(agent, env, self.obs, self.rng, prev_noise=self.noise, fast=self.fast)
            v = float(agent.value(step.anchor_norm))
            step.value = v
            r = step.aggregated_reward
            if agent.reward_scaler is not None:
                r = agent.reward_scaler(r, step.carry_discount, step.done)
            steps.append(step)
            rewards.append(r)
            values.append(v)
            micro += step.n
            self.ep_return += step.reward_sum
            if self.ar:
                self.noise = step.noise
            nv = math.nan
            if step.done:
                ends.append(i)
                returns.append(self.ep_return)
                self.ep_return = 0.0
                if step.truncated:
                    nv = float(agent.value(agent.obs_norm(step.next_obs)))
                self.obs = env.reset()
                if self.ar:
                    self.noise = np.zeros(env.action_dim)
            else:
                self.obs = step.next_obs
                if i == n - 1:
                    nv = float(agent.value(agent.obs_norm(step.next_obs)))
            nexts.append(nv)
        self.total_decisions += n
        self.total_micro += micro
        self.total_time += micro * env.delta
        return _pack(steps, rewards, values, nexts, ends, returns, micro, env.delta, agent)


def _pack(steps, rewards, values, nexts, ends, returns, micro, delta, agent) -> Rollout:
    K = agent.policy.action_dim
    aux = np.array([s.aux_raw for s in steps], dtype=float) if agent.policy.aux else None
    prev = None
    if agent.ctrl.kind is Kind.AR_NOISE:
        prev = np.array([np.zeros(K) if s.prev_noise is None else s.prev_noise for s in steps])
    return Rollout(
        steps=steps,
        obs=np.array([s.anchor_norm for s in steps]),
        actions=np.array([s.action for s in steps]).reshape(len(steps), K),
        aux_raw=aux, prev_noise=prev,
        log_probs=np.array([s.log_prob for s in steps]),
        values=np.array(values), rewards=np.array(rewards, dtype=float),
        raw_rewards=np.array([s.aggregated_reward for s in steps]),
        carry=np.array([s.carry_discount for s in steps]),
        terminated=np.array([s.terminated for s in steps]),
        truncated=np.array([s.truncated for s in steps]),
        next_values=np.array(nexts), episode_ends=ends, episode_returns=returns,
        micro_steps=micro, physical_time=micro * delta,
    )


def collect_rollout(collector: Collector, n_decisions: int) -> Rollout:
    return collector.collect(n_decisions)


# ---------------------------------------------------------------------------
# Advantages


def gae(rewards, values, carry, terminated, truncated, next_values, lam: float):
    """Duration-aware GAE. Returns ``(advantages, returns)``.

    ``delta_i = r_i + g_i V(s_{i+1}) - V(s_i)`` and
    ``A_i = delta_i + g_i lam A_{i+1}``, cut at episode ends. Terminations
    bootstrap 0, truncations and the rollout tail bootstrap ``next_values``.
    """
    n = len(rewards)
    adv = np.zeros(n)
    last = 0.0
    for i in range(n - 1, -1, -1):
        if terminated[i]:
            nv, cont = 0.0, 0.0
        elif truncated[i] or i == n - 1:
            nv, cont = next_values[i], 0.0
            if not math.isfinite(nv):
                raise ValueError(f"missing bootstrap value at decision {i}")
        else:
            nv, cont = values[i + 1], 1.0
        d = rewards[i] + carry[i] * nv - values[i]
        last = d + carry[i] * lam * cont * last
        adv[i] = last
    return adv, adv + np.asarray(values)


def compute_gae(rollout: Rollout, lam: float = 0.95, alpha: float = 0.0) -> AdvantageBatch:
    adv, ret = gae(rollout.rewards, rollout.values, rollout.carry, rollout.terminated,
                   rollout.truncated, rollout.next_values, lam)
    if not np.all(np.isfinite(adv)):
        raise NumericalError("non-finite advantages")
    return AdvantageBatch(rollout.obs, rollout.actions, rollout.aux_raw, rollout.prev_noise,
                          rollout.log_probs, rollout.values, adv, ret, alpha)


def standardize(x):
    return (x - x.mean()) / (x.std() + 1e-8)


# ---------------------------------------------------------------------------
# Updates


def clipped_objective(ratio, adv, clip: float):
    """Per-sample ``min(rho A, clip(rho, 1-eps, 1+eps) A)``."""
    return np.minimum(ratio * adv, np.clip(ratio, 1.0 - clip, 1.0 + clip) * adv)


def _apply(agent: Agent, opt: Adam, g_pi, g_v, max_grad_norm):
    norm = opt.step([agent.policy.theta, agent.value.theta], [g_pi, g_v], max_grad_norm)
    agent.policy.touch()
    agent.value.touch()
    agent.policy.check()
    if not np.all(np.isfinite(agent.value.theta)):
        raise NumericalError("non-finite value parameters")
    return norm


def _slice(batch: AdvantageBatch, idx):
    return (batch.obs[idx], batch.actions[idx],
            None if batch.aux_raw is None else batch.aux_raw[idx],
            None if batch.prev_noise is None else batch.prev_noise[idx])


def ppo_update(agent: Agent, batch: AdvantageBatch, opt: Adam, rng: np.random.Generator, *,
               clip: float = 0.2, epochs: int = 10, minibatch: int = 64, vf_coef: float = 0.5,
               ent_coef: float = 0.0, max_grad_norm: float | None = 0.5,
               normalize_adv: bool = True) -> dict:
    n = len(batch)
    if n == 0:
        raise ValueError("empty batch")
    adv_all = standardize(batch.advantages) if normalize_adv else batch.advantages
    stats = {"pi_loss": [], "v_loss": [], "approx_kl": [], "clip_frac": [], "grad_norm": []}
    for _ in range(epochs):
        perm = rng.permutation(n)
        for start in range(0, n, minibatch):
            idx = perm[start:start + minibatch]
            obs, act, aux, prev = _slice(batch, idx)
            adv = adv_all[idx]
            logp, _ = agent.policy.log_prob_grad(obs, act, aux, None, prev, batch.alpha)
            log_ratio = logp - batch.old_log_probs[idx]
            ratio = np.exp(log_ratio)
            obj = clipped_objective(ratio, adv, clip)
            pi_loss = -float(np.mean(obj))
            v_loss, g_v = agent.value.mse_grad(obs, batch.returns[idx])
            if not (math.isfinite(pi_loss) and math.isfinite(v_loss)):
                raise NumericalError(
                    f"non-finite loss: pi={pi_loss} v={v_loss} max|log ratio|={np.max(np.abs(log_ratio))}")
            m = len(idx)
            active = ratio * adv <= np.clip(ratio, 1.0 - clip, 1.0 + clip) * adv
            w = np.where(active, ratio * adv, 0.0) / m
            _, g = agent.policy.log_prob_grad(obs, act, aux, w, prev, batch.alpha, ent_coef / m)
            stats["grad_norm"].append(_apply(agent, opt, -g, vf_coef * g_v, max_grad_norm))
            stats["pi_loss"].append(pi_loss)
            stats["v_loss"].append(v_loss)
            stats["approx_kl"].append(float(np.mean((ratio - 1.0) - log_ratio)))
            stats["clip_frac"].append(float(np.mean(np.abs(ratio - 1.0) > clip)))
    out = {k: float(np.mean(v)) for k, v in stats.items()}
    out["entropy"] = agent.policy.entropy(batch.obs)
    return out


def a2c_update(agent: Agent, batch: AdvantageBatch, opt: Adam, *, vf_coef: float = 0.5,
               ent_coef: float = 0.0, max_grad_norm: float | None = 0.5,
               normalize_adv: bool = True) -> dict:
    n = len(batch)
    if n == 0:
        raise ValueError("empty batch")
    adv = standardize(batch.advantages) if normalize_adv else batch.advantages
    obs, act, aux, prev = batch.obs, batch.actions, batch.aux_raw, batch.prev_noise
    logp, g = agent.policy.log_prob_grad(obs, act, aux, adv / n, prev, batch.alpha, ent_coef / n)
    pi_loss = -float(np.mean(logp * adv))
    v_loss, g_v = agent.value.mse_grad(obs, batch.returns)
    if not (math.isfinite(pi_loss) and math.isfinite(v_loss)):
        raise NumericalError(f"non-finite loss: pi={pi_loss} v={v_loss}")
    norm = _apply(agent, opt, -g, vf_coef * g_v, max_grad_norm)
    return {"pi_loss": pi_loss, "v_loss": v_loss, "grad_norm": norm,
            "entropy": agent.policy.entropy(obs)}


def discounted_return(steps) -> float:
    """``R(tau) = sum_i (prod_{j<i} g_j) rbar_i`` over a decision sequence."""
    total, disc = 0.0, 1.0
    for s in steps:
        total += disc * s.aggregated_reward
        disc *= s.carry_discount
    return total


def trajectory_gradient(policy, steps, alpha: float = 0.0) -> np.ndarray:
    """``G(tau) = (sum_i grad log pi(a_i | s_i)) R(tau)`` for one complete episode."""
    R = discounted_return(steps)
    obs = np.array([s.anchor_norm for s in steps])
    act = np.array([s.action for s in steps])
    aux = np.array([s.aux_raw for s in steps], dtype=float) if getattr(policy, "aux", False) else None
    prev = None
    if alpha:
        prev = np.array([np.zeros(policy.action_dim) if s.prev_noise is None else s.prev_noise
                         for s in steps])
    _, g = policy.log_prob_grad(obs, act, aux, np.full(len(steps), R), prev, alpha)
    return g


def vpg_gradient(policy, trajectories, alpha: float = 0.0):
    """Mean of the per-trajectory estimators, and the stacked per-trajectory vectors."""
    per = np.array([trajectory_gradient(policy, t, alpha) for t in trajectories])
    return per.mean(axis=0), per


def scaled_lr(base_lr: float, delta: float, delta0: float) -> float:
    if delta <= 0 or delta0 <= 0:
        raise ValueError("time scales must be positive")
    return base_lr * delta / delta0


def run_episode(agent: Agent, env, rng, *, update_norm=False, deterministic=False, fast=True):
    """Play one episode; returns its DecisionSteps."""
    obs = env.reset()
    ar = agent.ctrl.kind is Kind.AR_NOISE and not deterministic
    noise = np.zeros(env.action_dim) if ar else None
    steps = []
    while True:
        s = decide(agent, env, obs, rng, update_norm=update_norm, deterministic=deterministic,
                   prev_noise=noise, fast=fast)
        steps.append(s)
        if ar:
            noise = s.noise
        if s.done:
            return steps
        obs = s.next_obs


def evaluate(agent: Agent, env, episodes: int, rng=None, deterministic=True) -> dict:
    """Undiscounted return and hold statistics over ``episodes`` episodes.

    The policy mean is used with the controller active; the normalizer is
    read but not updated.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    rets, holds, decisions = [], [], 0
    for _ in range(episodes):
        steps = run_episode(agent, env, rng, deterministic=deterministic)
        rets.append(sum(s.reward_sum for s in steps))
        holds.extend(s.duration for s in steps)
        decisions += len(steps)
    return {"return_mean": float(np.mean(rets)), "returns": rets,
            "mean_hold": float(np.mean(holds)), "decisions": decisions}


# ---------------------------------------------------------------------------
# Plain per-step engine. Written independently of the macro-action machinery
# as the reference a controller-free run must reproduce exactly.


class PlainCollector:
    def __init__(self, env, agent: Agent, rng: np.random.Generator):
        self.env, self.agent, self.rng = env, agent, rng
        self.obs = env.reset()
        self.ep_return = 0.0

    def collect(self, n: int) -> dict:
        agent, env = self.agent, self.env
        buf = {k: [] for k in ("obs", "act", "logp", "val", "rew", "term", "trunc", "next_v")}
        returns = []
        for i in range(n):
            agent.obs_norm.update(self.obs)
            x = agent.obs_norm(self.obs)
            s = agent.policy.sample(x, self.rng)
            v = float(agent.value(x))
            env.mark_decision()
            obs2, r, done = env.step(s.action)
            self.ep_return += r
            term, trunc = env.terminated, env.truncated
            if agent.reward_scaler is not None:
                r = agent.reward_scaler(r, env.gamma, done)
            nv = math.nan
            if done:
                returns.append(self.ep_return)
                self.ep_return = 0.0
                if trunc:
                    nv = float(agent.value(agent.obs_norm(obs2)))
                self.obs = env.reset()
            else:
                self.obs = obs2
                if i == n - 1:
                    nv = float(agent.value(agent.obs_norm(obs2)))
            for k, val in zip(buf, (x, s.action, s.log_prob, v, r, term, trunc, nv)):
                buf[k].append(val)
        out = {k: np.array(v) for k, v in buf.items()}
        out["returns"] = returns
        return out


def plain_gae(rew, val, term, trunc, next_v, gamma, lam):
    n = len(rew)
    adv = np.zeros(n)
    last = 0.0
    for t in reversed(range(n)):
        if term[t]:
            nxt, nonterminal = 0.0, 0.0
        elif trunc[t] or t == n - 1:
            nxt, nonterminal = next_v[t], 0.0
        else:
            nxt, nonterminal = val[t + 1], 1.0
        delta = rew[t] + gamma * nxt - val[t]
        last = delta + gamma * lam * nonterminal * last
        adv[t] = last
    return adv


def plain_batch(buf: dict, gamma: float, lam: float) -> AdvantageBatch:
    adv = plain_gae(buf["rew"], buf["val"], buf["term"], buf["trunc"], buf["next_v"], gamma, lam)
    return AdvantageBatch(buf["obs"], buf["act"].reshape(len(adv), -1), None, None, buf["logp"],
                          buf["val"], adv, adv + buf["val"])
