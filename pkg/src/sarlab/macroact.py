"""Action repetition: controllers, stop rules and the macro-action executor."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .timegrid import EpisodeFinished


class Kind(enum.Enum):
    NONE = "none"
    FIXED = "fixed"
    SAR = "sar"
    LAMBDA_SAR = "lambda_sar"
    FIGAR_C = "figar_c"
    AR_NOISE = "ar_noise"


class StopReason(enum.Enum):
    REGION_EXIT = "RegionExit"
    TIME_CAP = "TimeCap"
    EPISODE_END = "EpisodeEnd"
    FORCED = "Forced"


class Metric(enum.Enum):
    L1 = "l1"
    L2 = "l2"


_REL = 1e-9


def distance(s_norm, anchor_norm, metric: Metric | str = Metric.L1, mask=None) -> float:
    """Normalized L1 (mean absolute difference) or L2 (norm / sqrt(dim)) distance."""
    diff = np.asarray(s_norm, dtype=float) - np.asarray(anchor_norm, dtype=float)
    if mask is not None:
        mask = np.asarray(mask, dtype=int)
        if mask.size == 0:
            raise ValueError("empty distance mask")
        diff = diff[mask]
    if Metric(metric) is Metric.L1:
        return float(np.sum(np.abs(diff))) / diff.size
    return float(np.sqrt(diff @ diff)) / math.sqrt(diff.size)


def sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def figar_repeats(t: float, delta: float) -> int:
    """Number of micro-steps covering a duration ``t``: ``max(1, ceil(t/delta))``.

    Ratios within a relative 1e-9 of an integer are treated as that integer so
    that ``t = k * delta`` gives ``k`` despite rounding.
    """
    if t < 0 or delta <= 0:
        raise ValueError("need t >= 0 and delta > 0")
    q = t / delta
    r = round(q)
    if abs(q - r) <= _REL * max(1.0, q):
        return max(1, int(r))
    return max(1, math.ceil(q))


@dataclass(frozen=True)
class RepetitionController:
    """How long an action is held.

    ``t_max=None`` removes the time cap for SAR and lambda-SAR. ``mask`` picks
    the state dimensions entering the distance. ``n`` is the repeat count of
    the fixed controller and ``alpha`` the AR(1) coefficient of correlated
    exploration noise.
    """

    kind: Kind = Kind.NONE
    d_max: float = 0.5
    t_max: float | None = 0.05
    lam: float = 1.0
    metric: Metric = Metric.L1
    mask: tuple | None = None
    n: int = 1
    alpha: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        object.__setattr__(self, "metric", Metric(self.metric))
        if self.mask is not None:
            object.__setattr__(self, "mask", tuple(int(i) for i in self.mask))
            if not self.mask:
                raise ValueError("empty distance mask")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must lie in [0, 1], got {self.lam}")
        if self.d_max <= 0:
            raise ValueError("d_max must be positive")
        if self.t_max is not None and self.t_max <= 0:
            raise ValueError("t_max must be positive")
        if self.kind is Kind.FIGAR_C and self.t_max is None:
            raise ValueError("FiGAR-C needs t_max as its duration scale")
        if self.n < 1:
            raise ValueError("fixed repeat count must be >= 1")
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError("alpha must lie in [0, 1)")

    @property
    def uses_aux(self) -> bool:
        return self.kind in (Kind.SAR, Kind.LAMBDA_SAR, Kind.FIGAR_C)

    @property
    def uses_region(self) -> bool:
        return self.kind in (Kind.SAR, Kind.LAMBDA_SAR)

    def map_aux(self, raw: float) -> float:
        """Squash a raw aux sample into ``d_i`` in (0, d_max) or ``t_i`` in (0, t_max)."""
        scale = self.t_max if self.kind is Kind.FIGAR_C else self.d_max
        return scale * sigmoid(float(raw))

    def hold_limit(self, aux: float | None, delta: float) -> int | None:
        """Largest number of micro-steps a hold may last, ``None`` if unbounded."""
        k = self.kind
        if k in (Kind.NONE, Kind.AR_NOISE):
            return 1
        if k is Kind.FIXED:
            return self.n
        if k is Kind.FIGAR_C:
            return figar_repeats(min(aux, self.t_max), delta)
        if self.t_max is None:
            return None
        return max(1, math.floor(self.t_max / delta + _REL))


def should_stop(ctrl: RepetitionController, s_norm, anchor_norm, aux, elapsed: float,
                delta: float | None = None) -> tuple[bool, StopReason | None]:
    """Stop test after a micro-step, ``elapsed`` seconds into the hold.

    With ``delta`` given the time cap is applied on the micro-step grid, i.e.
    the hold stops when one more step would exceed the cap. Without it the
    cap reads ``elapsed >= cap``.
    """
    k = ctrl.kind
    if k in (Kind.NONE, Kind.AR_NOISE):
        return True, StopReason.FORCED
    if k is Kind.FIXED:
        if delta is None:
            raise ValueError("fixed repetition counts micro-steps; pass delta")
        n = round(elapsed / delta)
        return (True, StopReason.FORCED) if n >= ctrl.n else (False, None)
    if k is Kind.FIGAR_C:
        cap = min(aux, ctrl.t_max)
        if delta is not None:
            n = round(elapsed / delta)
            return (True, StopReason.TIME_CAP) if n >= figar_repeats(cap, delta) else (False, None)
        return (True, StopReason.TIME_CAP) if elapsed >= cap * (1 - _REL) else (False, None)
    dist = distance(s_norm, anchor_norm, ctrl.metric, ctrl.mask)
    score = dist if k is Kind.SAR else ctrl.lam * dist + (1.0 - ctrl.lam) * abs(elapsed)
    if score > aux:
        return True, StopReason.REGION_EXIT
    if ctrl.t_max is not None:
        if delta is not None:
            n = round(elapsed / delta)
            if n >= ctrl.hold_limit(aux, delta):
                return True, StopReason.TIME_CAP
        elif elapsed >= ctrl.t_max * (1 - _REL):
            return True, StopReason.TIME_CAP
    return False, None


@dataclass
class DecisionStep:
    """One decision and the micro-steps over which its action was held."""

    anchor_state: np.ndarray
    anchor_norm: np.ndarray
    action: np.ndarray
    aux: float | None
    n: int
    duration: float
    aggregated_reward: float
    carry_discount: float
    reward_sum: float
    done: bool
    terminated: bool
    truncated: bool
    stop_reason: StopReason
    next_obs: np.ndarray
    aux_raw: float | None = None
    log_prob: float = 0.0
    value: float = 0.0
    noise: np.ndarray | None = None
    prev_noise: np.ndarray | None = None
    force: np.ndarray | None = None
    rewards: list | None = field(default=None, repr=False)


def _geometric(g: float, k: int) -> float:
    return float(k) if g == 1.0 else (1.0 - g ** k) / (1.0 - g)


def execute_macro_action(env, obs, action, aux, ctrl: RepetitionController, snapshot=None, *,
                         fast: bool = True, keep_rewards: bool = False) -> DecisionStep:
    """Hold ``action`` from observation ``obs`` until the controller stops.

    ``snapshot`` is the frozen normalizer used for the anchor and every
    subsequent distance (identity when ``None``). Returns the aggregated
    discounted reward ``sum_k gamma^k r_k`` and carry discount ``gamma^n``.
    With ``fast`` the executor lets environments that expose ``quiet_steps``
    skip stretches where nothing observable changes.
    """
    if env.done:
        raise EpisodeFinished("execute_macro_action on a finished episode")
    norm = snapshot if snapshot is not None else (lambda x: np.asarray(x, dtype=float))
    anchor = np.array(obs, dtype=float)
    anchor_norm = norm(anchor)
    env.mark_decision()
    force = getattr(env, "decision_force", None)
    delta = env.delta
    g = env.gamma
    limit = ctrl.hold_limit(aux, delta)
    region = ctrl.uses_region
    lam_sar = ctrl.kind is Kind.LAMBDA_SAR
    quiet = getattr(env, "quiet_steps", None) if fast and not lam_sar and not keep_rewards else None
    total = 0.0
    plain = 0.0
    disc = 1.0
    n = 0
    rewards = [] if keep_rewards else None
    while True:
        if quiet is not None and n > 0:
            q = quiet(action)
            if limit is not None:
                q = min(q, limit - n - 1)
            if q > 0:
                r = env.advance_quiet(q, action)
                total += disc * r * _geometric(g, q)
                plain += r * q
                disc *= g ** q
                n += q
        next_obs, r, done = env.step(action)
        total += disc * r
        plain += r
        disc *= g
        n += 1
        if rewards is not None:
            rewards.append(r)
        if done:
            reason = StopReason.EPISODE_END
            break
        if region:
            dist = distance(norm(next_obs), anchor_norm, ctrl.metric, ctrl.mask)
            score = ctrl.lam * dist + (1.0 - ctrl.lam) * (n * delta) if lam_sar else dist
            if score > aux:
                reason = StopReason.REGION_EXIT
                break
        if limit is not None and n >= limit:
            reason = StopReason.FORCED if ctrl.kind in (Kind.NONE, Kind.FIXED, Kind.AR_NOISE) else StopReason.TIME_CAP
            break
    return DecisionStep(
        anchor_state=anchor, anchor_norm=np.asarray(anchor_norm, dtype=float),
        action=np.array(action, dtype=float), aux=aux, n=n, duration=n * delta,
        aggregated_reward=total, carry_discount=g ** n, reward_sum=plain, done=done,
        terminated=bool(env.terminated), truncated=bool(env.truncated), stop_reason=reason,
        next_obs=next_obs, force=None if force is None else np.array(force), rewards=rewards,
    )


class ArNoise:
    """AR(1) noise ``eps_t = alpha eps_{t-1} + sqrt(1 - alpha^2) eta_t`` with
    stationary unit variance."""

    def __init__(self, dim: int, alpha: float):
        if not 0.0 <= alpha < 1.0:
            raise ValueError("alpha must lie in [0, 1)")
        self.alpha = alpha
        self.beta = math.sqrt(1.0 - alpha * alpha)
        self.eps = np.zeros(dim)

    def reset(self, rng=None):
        self.eps = np.zeros_like(self.eps) if rng is None else rng.standard_normal(self.eps.shape)

    def step(self, rng) -> np.ndarray:
        self.eps = self.alpha * self.eps + self.beta * rng.standard_normal(self.eps.shape)
        return self.eps


__all__ = [
    "ArNoise", "DecisionStep", "Kind", "Metric", "RepetitionController", "StopReason",
    "distance", "execute_macro_action", "figar_repeats", "should_stop", "sigmoid",
]
