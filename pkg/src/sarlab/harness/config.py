"""Experiment configuration from flat ``key = value`` text or JSON."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

from ..envs import UnknownEnvError, make_env, parse_env_id
from ..macroact import Kind, Metric, RepetitionController


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    env_id: str = "pendulum"
    env_params: dict = field(default_factory=dict)
    algo: str = "ppo"
    engine: str = "macro"
    lr: float = 1e-4
    lr_scaling: str = "none"
    n_steps: int | None = None
    epochs: int = 10
    minibatch: int = 64
    clip: float = 0.2
    gae_lambda: float = 0.95
    vf_coef: float = 0.5
    ent_coef: float = 0.0
    max_grad_norm: float | None = 0.5
    hidden: tuple = (256, 256)
    init_log_std: float = 0.0
    scale_rewards: bool = True
    norm_rate: float = 1e-5
    controller: dict = field(default_factory=lambda: {"kind": "none"})
    delta: float | None = None
    deltas: list | None = None
    delta0: float | None = None
    gamma0: float = 0.99
    base_steps: int = 1000
    budget: int = 100_000
    budget_time: float | None = None
    eval_every: int | None = None
    eval_episodes: int = 10
    seeds: list = field(default_factory=lambda: list(range(8)))
    out_dir: str = "runs"
    run_id: str = "run"

    def __post_init__(self):
        self.validate()

    def validate(self):
        try:
            parse_env_id(self.env_id)
        except UnknownEnvError as e:
            raise ConfigError(str(e)) from None
        if self.algo not in ("ppo", "a2c", "vpg"):
            raise ConfigError(f"algo must be ppo, a2c or vpg, got {self.algo!r}")
        if self.engine not in ("macro", "plain"):
            raise ConfigError("engine must be 'macro' or 'plain'")
        if self.engine == "plain" and (self.algo == "vpg" or self.controller.get("kind", "none") != "none"):
            raise ConfigError("the plain engine supports ppo/a2c without a controller")
        if self.lr_scaling not in ("none", "delta"):
            raise ConfigError("lr_scaling must be 'none' or 'delta'")
        if not 0 < self.norm_rate <= 1:
            raise ConfigError("norm.rate must lie in (0, 1]")
        if self.budget < 0:
            raise ConfigError("budget must be >= 0")
        if len(set(self.seeds)) != len(self.seeds) or not self.seeds:
            raise ConfigError("seeds must be a nonempty list of distinct integers")
        if self.deltas is not None and not self.deltas:
            raise ConfigError("delta grid is empty")
        for v in [self.delta, self.delta0, *(self.deltas or [])]:
            if v is not None and v <= 0:
                raise ConfigError("time scales must be positive")
        self.hidden = tuple(int(h) for h in self.hidden)
        try:
            make_env(self.env_id, self.delta, 0, self.env_params, base_steps=self.base_steps,
                     gamma0=self.gamma0, delta0=self.delta0)
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"environment parameters: {e}") from None
        try:
            self.make_controller()
        except (ValueError, TypeError) as e:
            raise ConfigError(f"controller: {e}") from None

    @property
    def steps_per_update(self) -> int:
        if self.n_steps is not None:
            return int(self.n_steps)
        return {"ppo": 2048, "a2c": 256, "vpg": 2048}[self.algo]

    def make_controller(self) -> RepetitionController:
        c = dict(self.controller)
        kind = Kind(c.pop("kind", "none"))
        kw = {}
        for key, name in (("d_max", "d_max"), ("t_max", "t_max"), ("lambda", "lam"), ("n", "n"),
                          ("alpha", "alpha")):
            if key in c:
                kw[name] = c.pop(key)
        if "metric" in c:
            kw["metric"] = Metric(c.pop("metric"))
        if "mask" in c:
            m = c.pop("mask")
            kw["mask"] = None if m is None else tuple(m)
        if c:
            raise ConfigError(f"unknown controller keys {sorted(c)}")
        return RepetitionController(kind, **kw)

    def to_flat(self) -> dict:
        out = {}
        d = asdict(self)
        for k, v in d.items():
            if k in ("env_params", "controller"):
                prefix = "env" if k == "env_params" else "controller"
                for kk, vv in v.items():
                    out[f"{prefix}.{kk}"] = vv
            elif k in _REVERSE:
                out[_REVERSE[k]] = list(v) if isinstance(v, tuple) else v
        return out


# flat key -> field
_KEYS = {
    "env.id": "env_id", "algo": "algo", "engine": "engine", "lr": "lr",
    "lr_scaling": "lr_scaling", "train.n_steps": "n_steps", "ppo.epochs": "epochs",
    "ppo.minibatch": "minibatch", "ppo.clip": "clip", "gae.lambda": "gae_lambda",
    "loss.vf_coef": "vf_coef", "loss.ent_coef": "ent_coef", "loss.max_grad_norm": "max_grad_norm",
    "net.hidden": "hidden", "net.init_log_std": "init_log_std", "reward.scale": "scale_rewards",
    "norm.rate": "norm_rate",
    "delta": "delta", "deltas": "deltas", "delta0": "delta0", "gamma0": "gamma0",
    "base_steps": "base_steps", "train.budget": "budget", "train.budget_time": "budget_time",
    "train.eval_every": "eval_every", "train.eval_episodes": "eval_episodes", "seeds": "seeds",
    "out_dir": "out_dir", "run_id": "run_id",
}
_REVERSE = {v: k for k, v in _KEYS.items()}
_CONTROLLER_KEYS = {"kind", "d_max", "t_max", "lambda", "metric", "mask", "n", "alpha"}


def _value(text: str):
    text = text.strip()
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        low = text.lower()
        if low in ("true", "false"):
            return low == "true"
        if low == "null":
            return None
        return text.strip("'\"")


def parse_flat_text(text: str) -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        k, v = line.split("=", 1)
        k = k.strip()
        if k in out:
            raise ConfigError(f"line {lineno}: duplicate key {k!r}")
        out[k] = _value(v)
    return out


def flatten(d: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(flatten(v, key + "."))
        else:
            out[key] = v
    return out


def from_flat(flat: dict) -> ExperimentConfig:
    kw = {"env_params": {}, "controller": {}}
    for k, v in flat.items():
        if k in _KEYS:
            kw[_KEYS[k]] = v
        elif k.startswith("controller."):
            sub = k.split(".", 1)[1]
            if sub not in _CONTROLLER_KEYS:
                raise ConfigError(f"unknown controller key {k!r}")
            kw["controller"][sub] = v
        elif k.startswith("env."):
            kw["env_params"][k.split(".", 1)[1]] = v
        else:
            raise ConfigError(f"unknown config key {k!r}")
    kw["controller"].setdefault("kind", "none")
    try:
        return ExperimentConfig(**kw)
    except TypeError as e:
        raise ConfigError(str(e)) from None


def load_config(path, apply_env: bool = True) -> ExperimentConfig:
    """Read a ``.json`` file (nested or dotted keys) or flat text."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} not found")
    text = path.read_text()
    if path.suffix == ".json":
        try:
            flat = flatten(json.loads(text))
        except json.JSONDecodeError as e:
            raise ConfigError(f"bad JSON: {e}") from None
    else:
        flat = parse_flat_text(text)
    cfg = from_flat(flat)
    if apply_env:
        apply_seed_override(cfg)
    return cfg


def apply_seed_override(cfg: ExperimentConfig, environ=None) -> ExperimentConfig:
    """``SARLAB_SEED`` (an int or comma list) replaces the configured seeds."""
    raw = (os.environ if environ is None else environ).get("SARLAB_SEED")
    if raw:
        try:
            cfg.seeds = [int(s) for s in raw.split(",") if s.strip()]
        except ValueError:
            raise ConfigError(f"SARLAB_SEED must be integers, got {raw!r}") from None
        cfg.validate()
    return cfg
