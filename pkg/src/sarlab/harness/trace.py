"""Per-decision traces of a trained policy and their safe-region pictures."""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from ..envs import make_env
from ..macroact import Kind, Metric, RepetitionController
from ..pg import run_episode
from . import svg
from .runlog import CsvWriter


class MaskError(ValueError):
    pass


def check_mask(mask, obs_dim: int) -> tuple[int, ...]:
    if mask is None:
        return tuple(range(min(2, obs_dim)))
    mask = tuple(int(i) for i in mask)
    if not mask or len(set(mask)) != len(mask) or min(mask) < 0 or max(mask) >= obs_dim:
        raise MaskError(f"mask {mask} does not fit an observation of size {obs_dim}")
    return mask


def region_radius(d: float, metric: Metric, m: int) -> float:
    """Radius of the ball ``dist <= d`` in the masked coordinates.

    L1 distance is a mean over ``m`` coordinates, so the diamond has radius
    ``d * m``; L2 divides the norm by ``sqrt(m)``, giving ``d * sqrt(m)``.
    """
    return d * m if Metric(metric) is Metric.L1 else d * math.sqrt(m)


def trace_columns(obs_dim: int, force_dim: int) -> tuple:
    return (("episode", "decision")
            + tuple(f"anchor_{i}" for i in range(obs_dim))
            + tuple(f"anchor_norm_{i}" for i in range(obs_dim))
            + ("aux", "hold_steps", "hold_duration_s", "stop_reason")
            + tuple(f"force_{i}" for i in range(force_dim)))


def export_trace(checkpoint, env=None, ctrl: RepetitionController | None = None,
                 n_episodes: int = 10, mask=None, out_dir=".", seed: int = 0,
                 deterministic: bool = True, name: str = "trace") -> dict:
    """Replay a checkpoint and write ``<name>.csv`` and ``<name>.svg``.

    Each CSV row is one decision. ``aux`` is the threshold ``d_i`` (SAR),
    the duration ``t_i`` (FiGAR-C) or empty. The SVG scatters the first two
    masked dims of the normalized anchors, with a region drawn per decision
    when the controller has one.
    """
    from .experiment import load_agent
    agent, meta = load_agent(checkpoint, ctrl)
    ctrl = agent.ctrl
    if env is None:
        env = make_env(meta["env_id"], meta["delta"], seed, meta.get("env_params"),
                       base_steps=meta["base_steps"], gamma0=meta["gamma0"], delta0=meta["delta0"])
    if env.obs_dim != agent.policy.obs_dim:
        raise MaskError(f"checkpoint expects {agent.policy.obs_dim} observation dims, env has {env.obs_dim}")
    if ctrl.mask is not None:
        if mask is not None and tuple(mask) != tuple(ctrl.mask):
            raise MaskError("plot mask differs from the controller's distance mask")
        mask = ctrl.mask
    mask = check_mask(mask, env.obs_dim)
    region_m = len(mask) if ctrl.mask is not None else env.obs_dim
    force_dim = int(getattr(env, "force_width", 0) or 0)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    rows, points, radii, hot = [], [], [], []
    cols = trace_columns(env.obs_dim, force_dim)
    with CsvWriter(out / f"{name}.csv", cols) as w:
        for ep in range(n_episodes):
            for k, s in enumerate(run_episode(agent, env, rng, deterministic=deterministic)):
                row = {"episode": ep, "decision": k, "aux": "" if s.aux is None else float(s.aux),
                       "hold_steps": s.n, "hold_duration_s": s.duration, "stop_reason": s.stop_reason.value}
                for i in range(env.obs_dim):
                    row[f"anchor_{i}"] = float(s.anchor_state[i])
                    row[f"anchor_norm_{i}"] = float(s.anchor_norm[i])
                f = np.zeros(force_dim) if s.force is None else np.asarray(s.force, dtype=float)
                for i in range(force_dim):
                    row[f"force_{i}"] = float(f[i])
                w.write(row)
                rows.append(row)
                xy = np.asarray(s.anchor_norm)[list(mask[:2])]
                points.append((float(xy[0]), float(xy[-1])))
                r = None
                lam = ctrl.lam if ctrl.kind is Kind.LAMBDA_SAR else 1.0
                if ctrl.uses_region and s.aux is not None and len(mask) >= 2 and lam > 0:
                    d = float(s.aux) / lam
                    r = region_radius(d, ctrl.metric, region_m)
                radii.append(r)
                hot.append(bool(np.any(f != 0)))
    labels = tuple(f"normalized obs[{i}]" for i in mask[:2])
    if len(labels) == 1:
        labels = labels * 2
    pic = svg.region_scatter(points, radii, ctrl.metric.value, labels,
                             title=f"{ctrl.kind.value} decisions", highlight=hot)
    svg.write(out / f"{name}.svg", pic)
    return {"csv": out / f"{name}.csv", "svg": out / f"{name}.svg", "rows": rows,
            "mask": mask, "radii": radii}


def force_exit_rates(rows, force_cols) -> tuple[float, float]:
    """RegionExit frequency among decisions with and without an applied force."""
    with_f, without = [], []
    for r in rows:
        exit_ = r["stop_reason"] == "RegionExit"
        (with_f if any(r[c] != 0 for c in force_cols) else without).append(exit_)
    rate = lambda v: float(np.mean(v)) if v else math.nan
    return rate(with_f), rate(without)
