"""Desk-scale environments and wrappers."""

from .alert_then_off import AlertThenOffEnv, optimal_off
from .pendulum import PENDULUM_CONSTANTS, pendulum_mdp
from .point_mass import point_mass_mdp
from .random_walk import (
    RandomWalkEnv,
    random_walk_success_probability,
    random_walk_success_probability_exact,
    simulate_uniform_walks,
)
from .registry import ENV_IDS, WRAPPER_DEFAULTS, WRAPPER_IDS, UnknownEnvError, make_env, parse_env_id
from .wrappers import EnvWrapper, HoldPenaltyWrapper, Mode, StochasticityWrapper

__all__ = [
    "AlertThenOffEnv", "ENV_IDS", "EnvWrapper", "HoldPenaltyWrapper", "Mode",
    "PENDULUM_CONSTANTS", "RandomWalkEnv", "StochasticityWrapper", "UnknownEnvError",
    "WRAPPER_DEFAULTS", "WRAPPER_IDS", "make_env", "optimal_off", "parse_env_id",
    "pendulum_mdp", "point_mass_mdp", "random_walk_success_probability",
    "random_walk_success_probability_exact", "simulate_uniform_walks",
]
