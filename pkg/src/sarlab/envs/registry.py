"""String ids for environments, e.g. ``"pendulum+ext_force+hold_penalty"``."""

from __future__ import annotations

import numpy as np

from ..timegrid import DiscretizedEnv, Integrator, horizon_steps
from .alert_then_off import AlertThenOffEnv
from .pendulum import PENDULUM_CONSTANTS, pendulum_mdp
from .point_mass import point_mass_mdp
from .random_walk import RandomWalkEnv
from .wrappers import HoldPenaltyWrapper, Mode, StochasticityWrapper

BASE_DELTA = {"pendulum": 0.04, "point_mass": 0.02, "alert_then_off": 1e-3, "random_walk": 0.5}

# Pendulum defaults for the perturbation scales. The cart-pole is far lighter
# than the MuJoCo model, so the magnitudes are rescaled (see notes in README).
WRAPPER_DEFAULTS = {
    "p_ext": 0.05, "sigma_ext": 30.0, "sigma_ext2": 100.0,
    "p_act": 0.05, "sigma_act": 3.0,
    "t_thres": 0.04, "r_penalty": -1.0,
}

_BASE_KEYS = {
    "pendulum": set(PENDULUM_CONSTANTS),
    "point_mass": {"mass", "goal", "init_noise", "action_bound"},
    "alert_then_off": {"x", "nu", "auto_off"},
    "random_walk": set(),
}
_SUFFIX_KEYS = {
    "ext_force": {"p_ext", "sigma_ext"},
    "percept_force": {"p_ext", "sigma_ext2"},
    "act_noise": {"p_act", "sigma_act"},
    "hold_penalty": {"t_thres", "r_penalty"},
}

ENV_IDS = tuple(_BASE_KEYS)
WRAPPER_IDS = tuple(_SUFFIX_KEYS)


class UnknownEnvError(KeyError):
    pass


def parse_env_id(env_id: str) -> tuple[str, list[str]]:
    base, *suffixes = env_id.strip().split("+")
    if base not in _BASE_KEYS:
        raise UnknownEnvError(f"unknown environment {base!r}; known: {', '.join(ENV_IDS)}")
    for s in suffixes:
        if s not in _SUFFIX_KEYS:
            raise UnknownEnvError(f"unknown wrapper {s!r}; known: {', '.join(WRAPPER_IDS)}")
    return base, suffixes


def make_env(env_id: str, delta: float | None = None, seed: int = 0, params: dict | None = None,
             *, base_steps: int = 1000, gamma0: float = 0.99, delta0: float | None = None,
             integrator: Integrator = Integrator.EULER):
    """Build an environment from its id.

    ``params`` is one flat table shared by the base env and its wrappers;
    every key must be understood by at least one of them.
    """
    base, suffixes = parse_env_id(env_id)
    params = dict(params or {})
    allowed = set(_BASE_KEYS[base]).union(*(_SUFFIX_KEYS[s] for s in suffixes))
    unknown = set(params) - allowed
    if unknown:
        raise KeyError(f"parameters {sorted(unknown)} not understood by {env_id!r}")
    if delta0 is None:
        delta0 = BASE_DELTA[base]
    if delta is None:
        delta = delta0
    if delta <= 0:
        raise ValueError(f"delta must be positive, got {delta}")

    ss = np.random.SeedSequence(seed)
    env_seed, *wrap_seeds = ss.spawn(1 + len(suffixes))
    env_seed = int(env_seed.generate_state(1)[0])
    base_params = {k: v for k, v in params.items() if k in _BASE_KEYS[base]}

    if base == "pendulum":
        mdp = pendulum_mdp(delta0=delta0, base_steps=base_steps, gamma=gamma0, **base_params)
        env = DiscretizedEnv(mdp, delta, seed=env_seed, integrator=integrator,
                             max_steps=horizon_steps(base_steps, delta, delta0))
    elif base == "point_mass":
        mdp = point_mass_mdp(delta0=delta0, base_steps=base_steps, gamma=gamma0, **base_params)
        env = DiscretizedEnv(mdp, delta, seed=env_seed, integrator=integrator,
                             max_steps=horizon_steps(base_steps, delta, delta0))
    elif base == "alert_then_off":
        env = AlertThenOffEnv(delta=delta, seed=env_seed, **base_params)
    else:
        env = RandomWalkEnv(int(round(2.0 / delta)), seed=env_seed)

    for s, ws in zip(suffixes, wrap_seeds):
        w_seed = int(ws.generate_state(1)[0])
        d = {k: params.get(k, WRAPPER_DEFAULTS[k]) for k in _SUFFIX_KEYS[s]}
        if s == "hold_penalty":
            env = HoldPenaltyWrapper(env, **d)
        else:
            env = StochasticityWrapper(env, Mode(s), seed=w_seed, **d)
    return env
