"""Train one or more demo configs and print final returns per time scale.

    python demos/desk_training.py stoch_sar stoch_figar_c
    python demos/desk_training.py pomdp_sar pomdp_lambda_sar --set env.r_penalty=-0.04 --tag soft

Config names refer to files in demos/configs. ``--set`` overrides flat
config keys; ``--seeds`` trims the seed list for a quicker look.
"""
import argparse
import json
import math
from pathlib import Path

import numpy as np

from sarlab.harness.config import from_flat, load_config
from sarlab.harness.experiment import run_experiment, sweep_delta

CONFIGS = Path(__file__).parent / "configs"


def final_by_delta(rows):
    last = {}
    for r in rows:
        key = (r["delta"], r["seed"])
        if key not in last or r["decision_steps"] >= last[key]["decision_steps"]:
            last[key] = r
    out = {}
    for (d, _), r in sorted(last.items()):
        out.setdefault(d, []).append(r["episode_return_mean"])
    return out


def parse_override(item):
    key, _, text = item.partition("=")
    try:
        return key, json.loads(text)
    except json.JSONDecodeError:
        return key, text


def main():
    p = argparse.ArgumentParser()
    p.add_argument("configs", nargs="+")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--seeds", help="comma list replacing the config's seeds")
    p.add_argument("--tag", default="", help="suffix for the run id")
    p.add_argument("--out-dir", default="runs/demos")
    args = p.parse_args()

    for name in args.configs:
        flat = load_config(CONFIGS / f"{name}.cfg").to_flat()
        flat.update(parse_override(s) for s in args.set)
        if args.seeds:
            flat["seeds"] = [int(s) for s in args.seeds.split(",")]
        if args.tag:
            flat["run_id"] = f"{flat['run_id']}_{args.tag}"
        flat["out_dir"] = args.out_dir
        cfg = from_flat(flat)
        if cfg.deltas:
            res = sweep_delta(cfg)
            rows = [r for v in res["results"].values() for r in v["rows"]]
        else:
            rows = run_experiment(cfg)["rows"]
        for d, rets in final_by_delta(rows).items():
            x = np.array(rets)
            half = 1.96 * x.std(ddof=1) / math.sqrt(len(x)) if len(x) > 1 else 0.0
            print(f"{cfg.run_id:24s} delta={d:<7g} final return {x.mean():8.3f} +- {half:.3f} "
                  f"over {len(x)} seeds")


if __name__ == "__main__":
    main()
