"""Seeded training runs and time-scale sweeps."""

from __future__ import annotations

import math
import time
import traceback
from pathlib import Path

import numpy as np

from ..envs import make_env, parse_env_id
from ..envs.registry import BASE_DELTA
from ..macroact import Kind, RepetitionController
from ..pg import (Agent, Collector, PlainCollector, ReturnScaler, a2c_update, compute_gae,
                  evaluate, plain_batch, ppo_update, run_episode, scaled_lr, vpg_gradient)
from ..tinynn import Adam, GaussianPolicy, Normalizer, ValueNet, load_checkpoint, save_checkpoint
from .config import ExperimentConfig
from .runlog import COLUMNS, CsvWriter, HEADER_LINE, ci95_half, read_csv, write_summary
from .plot import plot_runlogs


def base_delta(env_id: str) -> float:
    return BASE_DELTA[parse_env_id(env_id)[0]]


def controller_label(ctrl: RepetitionController) -> str:
    k = ctrl.kind
    if k is Kind.LAMBDA_SAR:
        return f"lambda_sar({ctrl.lam:g})"
    if k is Kind.FIXED:
        return f"fixed({ctrl.n})"
    if k is Kind.AR_NOISE:
        return f"ar_noise({ctrl.alpha:g})"
    return k.value


def seed_streams(seed: int):
    """Independent integer seeds for init, sampling, training env and evaluation env."""
    ss = np.random.SeedSequence([int(seed), 0x5A12])
    return [int(s.generate_state(1)[0]) for s in ss.spawn(4)]


class Trainer:
    """One seed of one configuration."""

    def __init__(self, cfg: ExperimentConfig, seed: int, delta: float | None = None):
        self.cfg = cfg
        self.seed = seed
        self.ctrl = cfg.make_controller()
        d0 = cfg.delta0 if cfg.delta0 is not None else base_delta(cfg.env_id)
        self.delta0 = d0
        self.delta = float(delta if delta is not None else (cfg.delta if cfg.delta is not None else d0))
        s_init, s_sample, s_env, s_eval = seed_streams(seed)
        mk = dict(params=cfg.env_params, base_steps=cfg.base_steps, gamma0=cfg.gamma0, delta0=d0)
        self.env = make_env(cfg.env_id, self.delta, s_env, **mk)
        self.eval_env = make_env(cfg.env_id, self.delta, s_eval, **mk)
        init_rng = np.random.default_rng(s_init)
        self.rng = np.random.default_rng(s_sample)
        self.eval_seed = s_eval
        self.agent = Agent.build(self.env.obs_dim, self.env.action_dim, self.ctrl, init_rng,
                                 hidden=cfg.hidden, init_log_std=cfg.init_log_std,
                                 scale_rewards=cfg.scale_rewards, norm_rate=cfg.norm_rate)
        lr = cfg.lr if cfg.lr_scaling == "none" else scaled_lr(cfg.lr, self.delta, d0)
        self.opt = Adam([self.agent.policy.theta.shape, self.agent.value.theta.shape], lr=lr)
        if cfg.engine == "plain":
            self.collector = PlainCollector(self.env, self.agent, self.rng)
        else:
            self.collector = Collector(self.env, self.agent, self.rng)
        self.decisions = 0
        self.micro_steps = 0
        self.physical_time = 0.0
        self.updates = 0
        self.history = []   # per-update stats

    @property
    def gamma(self) -> float:
        return self.env.gamma

    def budget_left(self) -> bool:
        cfg = self.cfg
        if self.decisions >= cfg.budget:
            return False
        if cfg.budget_time is not None and self.physical_time >= cfg.budget_time:
            return False
        return True

    def update(self) -> dict:
        """Collect one batch and apply one update."""
        cfg, agent = self.cfg, self.agent
        n = cfg.steps_per_update
        if cfg.algo == "vpg":
            return self._vpg_update(n)
        if cfg.engine == "plain":
            buf = self.collector.collect(n)
            batch = plain_batch(buf, self.env.gamma, cfg.gae_lambda)
            micro, finished = n, buf["returns"]
        else:
            ro = self.collector.collect(n)
            alpha = self.ctrl.alpha if self.ctrl.kind is Kind.AR_NOISE else 0.0
            batch = compute_gae(ro, cfg.gae_lambda, alpha)
            micro, finished = ro.micro_steps, ro.episode_returns
        if cfg.algo == "ppo":
            stats = ppo_update(agent, batch, self.opt, self.rng, clip=cfg.clip, epochs=cfg.epochs,
                               minibatch=cfg.minibatch, vf_coef=cfg.vf_coef, ent_coef=cfg.ent_coef,
                               max_grad_norm=cfg.max_grad_norm)
        else:
            stats = a2c_update(agent, batch, self.opt, vf_coef=cfg.vf_coef, ent_coef=cfg.ent_coef,
                               max_grad_norm=cfg.max_grad_norm)
        self._advance(n, micro)
        stats["train_return"] = float(np.mean(finished)) if finished else float("nan")
        self.history.append(stats)
        return stats

    def _vpg_update(self, n) -> dict:
        trajs, decisions, micro = [], 0, 0
        while decisions < n:
            steps = run_episode(self.agent, self.env, self.rng, update_norm=True)
            trajs.append(steps)
            decisions += len(steps)
            micro += sum(s.n for s in steps)
        alpha = self.ctrl.alpha if self.ctrl.kind is Kind.AR_NOISE else 0.0
        g, _ = vpg_gradient(self.agent.policy, trajs, alpha)
        zero_v = np.zeros_like(self.agent.value.theta)
        norm = self.opt.step([self.agent.policy.theta, self.agent.value.theta], [-g, zero_v],
                             self.cfg.max_grad_norm)
        self.agent.policy.touch()
        self.agent.policy.check()
        self._advance(decisions, micro)
        stats = {"grad_norm": norm, "episodes": len(trajs)}
        self.history.append(stats)
        return stats

    def _advance(self, decisions, micro):
        self.decisions += decisions
        self.micro_steps += micro
        self.physical_time += micro * self.delta
        self.updates += 1

    def evaluate(self) -> dict:
        return evaluate(self.agent, self.eval_env, self.cfg.eval_episodes,
                        np.random.default_rng(self.eval_seed))

    def row(self, ev: dict, wall: float, run_id: str) -> dict:
        return {
            "run_id": run_id, "seed": self.seed, "delta": self.delta, "algo": self.cfg.algo,
            "controller": controller_label(self.ctrl), "decision_steps": self.decisions,
            "micro_steps": self.micro_steps, "physical_time_s": self.physical_time,
            "episode_return_mean": ev["return_mean"],
            "episode_return_ci95_half": ci95_half(ev["returns"]),
            "mean_hold_duration_s": ev["mean_hold"], "wallclock_s": wall,
        }

    def save(self, path, run_id: str = ""):
        a = self.agent
        arrays = {"policy": a.policy.theta, "value": a.value.theta,
                  "obs_mean": a.obs_norm.mean, "obs_var": a.obs_norm.var}
        meta = {
            "obs_dim": a.policy.obs_dim, "action_dim": a.policy.action_dim, "aux": a.policy.aux,
            "hidden": list(a.policy.hidden), "normalizer": a.obs_norm.state(),
            "env_id": self.cfg.env_id, "env_params": self.cfg.env_params, "delta": self.delta,
            "delta0": self.delta0, "base_steps": self.cfg.base_steps, "gamma0": self.cfg.gamma0,
            "controller": self.cfg.controller, "seed": self.seed, "run_id": run_id,
            "decision_steps": self.decisions,
        }
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        save_checkpoint(path, arrays, meta)


def load_agent(path, ctrl: RepetitionController | None = None) -> tuple[Agent, dict]:
    arrays, meta = load_checkpoint(path)
    policy = GaussianPolicy(meta["obs_dim"], meta["action_dim"], meta["aux"], tuple(meta["hidden"]))
    policy.theta[...] = arrays["policy"]
    policy.touch()
    value = ValueNet(meta["obs_dim"], tuple(meta["hidden"]))
    value.theta[...] = arrays["value"]
    value.touch()
    norm = Normalizer.from_state(meta["normalizer"])
    if ctrl is None:
        c = dict(meta.get("controller", {"kind": "none"}))
        from .config import ExperimentConfig as _C
        ctrl = _C(env_id=meta["env_id"], env_params=meta.get("env_params", {}),
                  controller=c).make_controller()
    return Agent(policy, value, norm, ctrl, ReturnScaler()), meta


def train_seed(cfg: ExperimentConfig, seed: int, delta: float | None, writer: CsvWriter | None,
               run_id: str, ckpt_dir: Path | None = None, on_update=None) -> tuple[Trainer, list[dict]]:
    """Train one seed, logging an evaluation row initially, every ``eval_every`` decisions and at the end."""
    tr = Trainer(cfg, seed, delta)
    rows = []
    t0 = time.perf_counter()

    def log():
        row = tr.row(tr.evaluate(), time.perf_counter() - t0, run_id)
        rows.append(row)
        if writer is not None:
            writer.write(row)

    log()
    next_eval = cfg.eval_every if cfg.eval_every else math.inf
    while tr.budget_left():
        stats = tr.update()
        if on_update is not None:
            on_update(tr, stats)
        if tr.decisions >= next_eval:
            log()
            while next_eval <= tr.decisions:
                next_eval += cfg.eval_every
    if rows[-1]["decision_steps"] != tr.decisions:
        log()
    if ckpt_dir is not None:
        tr.save(Path(ckpt_dir) / f"seed{seed}_delta{tr.delta:g}.ckpt", run_id)
    return tr, rows


def run_experiment(cfg: ExperimentConfig, delta: float | None = None, run_id: str | None = None,
                   out_dir=None, plot: bool = True) -> dict:
    """Train every seed and write ``runlog.csv``, ``summary.csv``, checkpoints and a plot."""
    run_id = run_id or cfg.run_id
    out = Path(out_dir or cfg.out_dir) / run_id
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    with CsvWriter(out / "runlog.csv", COLUMNS, HEADER_LINE) as w:
        for seed in cfg.seeds:
            _, r = train_seed(cfg, seed, delta, w, run_id, ckpt_dir=out / "checkpoints")
            rows.extend(r)
    write_summary(out / "summary.csv", rows)
    if plot:
        plot_runlogs([out / "runlog.csv"], out / "returns.svg")
    return {"dir": out, "runlog": out / "runlog.csv", "summary": out / "summary.csv", "rows": rows}


def sweep_delta(cfg: ExperimentConfig) -> dict:
    """``run_experiment`` at every delta of ``cfg.deltas``; failures are recorded per cell."""
    deltas = cfg.deltas or [cfg.delta if cfg.delta is not None else
                            (cfg.delta0 or base_delta(cfg.env_id))]
    base = Path(cfg.out_dir) / cfg.run_id
    base.mkdir(parents=True, exist_ok=True)
    results, failures, paths, all_rows = {}, {}, [], []
    for d in deltas:
        rid = f"{cfg.run_id}_d{d:g}"
        try:
            res = run_experiment(cfg, delta=d, run_id=rid, out_dir=base, plot=False)
            results[d] = res
            paths.append(res["runlog"])
            all_rows.extend(res["rows"])
        except Exception as e:  # keep sweeping; the cell is reported as failed
            failures[d] = f"{type(e).__name__}: {e}"
            (base / f"{rid}.error.txt").write_text(traceback.format_exc())
    if all_rows:
        with CsvWriter(base / "runlog.csv", COLUMNS, HEADER_LINE) as w:
            for r in all_rows:
                w.write(r)
        write_summary(base / "summary.csv", all_rows)
        plot_runlogs(paths, base / "returns.svg")
    return {"dir": base, "results": results, "failures": failures}
