"""Charts from sarlab CSV files."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..varprobe import theorem1_bound
from . import svg
from .runlog import SchemaError, ci95_half, read_csv

AXES = ("decision_steps", "physical_time_s", "wallclock_s", "micro_steps", "delta")
BOUND_LABEL = "lower-bound shape, not fitted"
_GROUP_COLS = ("run_id", "controller", "algo", "delta")


def parse_plot_spec(spec) -> dict:
    """A plot spec is a dict, a JSON string or a path to a JSON file."""
    if spec is None:
        return {}
    if isinstance(spec, dict):
        return dict(spec)
    p = Path(spec)
    text = p.read_text() if p.suffix == ".json" and p.exists() else str(spec)
    try:
        out = json.loads(text)
    except json.JSONDecodeError as e:
        raise SchemaError(f"plot spec is neither a JSON file nor JSON text: {e}") from None
    if not isinstance(out, dict):
        raise SchemaError("plot spec must be a JSON object")
    return out


def _series_for(rows, cols, x, y, fallback_label):
    """Seed-averaged series grouped by the identifying columns present in ``cols``."""
    keys = [c for c in _GROUP_COLS if c in cols and c != x]
    groups = {}
    for r in rows:
        label = " ".join(f"{r[k]:g}" if isinstance(r[k], float) else str(r[k]) for k in keys) or fallback_label
        per_seed = groups.setdefault(label, {})
        per_seed.setdefault(r.get("seed", 0), []).append(r)
    out = []
    for label, per_seed in groups.items():
        runs = list(per_seed.values())
        n = min(len(r) for r in runs)
        xs = [float(np.mean([r[i][x] for r in runs])) for i in range(n)]
        ys = [float(np.mean([r[i][y] for r in runs])) for i in range(n)]
        band = [ci95_half([r[i][y] for r in runs]) for i in range(n)]
        out.append(svg.Series(label, xs, ys, band if len(runs) > 1 else None))
    return out


def plot(paths, spec=None, out=None) -> Path:
    """Line chart of ``spec['y']`` against ``spec['x']`` for CSVs sharing one schema.

    Keys: ``x``, ``y``, ``logx``, ``logy``, ``loglog``, ``title``, ``out`` and
    ``bound`` (``{"T": .., "c": 1, "sigma_min": ..}``), which adds the
    inverse-delta reference line on a delta axis.
    """
    spec = parse_plot_spec(spec)
    paths = [Path(p) for p in paths]
    if not paths:
        raise SchemaError("no CSV files given")
    tables = [read_csv(p) for p in paths]
    schema = tables[0][0]
    for p, (cols, _) in zip(paths, tables):
        if cols != schema:
            raise SchemaError(f"{p} does not share the schema of {paths[0]}")
    probe = "trace_estimate" in schema
    x = spec.get("x", "delta" if probe else "decision_steps")
    y = spec.get("y", "trace_estimate" if probe else "episode_return_mean")
    if x not in schema or y not in schema:
        raise SchemaError(f"columns {x!r}/{y!r} not in {schema}")
    if not probe and x not in AXES:
        raise SchemaError(f"x axis must be one of {AXES}")
    loglog = bool(spec.get("loglog", probe))
    logx = bool(spec.get("logx", loglog))
    logy = bool(spec.get("logy", loglog))
    series = []
    for p, (cols, rows) in zip(paths, tables):
        series.extend(_series_for(rows, cols, x, y, p.stem))
    if "bound" in spec:
        b = spec["bound"]
        xs = sorted({v for s in series for v in s.x})
        if x != "delta" or not xs:
            raise SchemaError("a bound line needs a delta axis")
        ys = [theorem1_bound(b.get("T", 1.0), b.get("c", 1.0), d, b.get("sigma_min", 1.0)) for d in xs]
        series.append(svg.Series(BOUND_LABEL, xs, ys, dashed=True, color="#555555"))
    target = Path(out or spec.get("out") or paths[0].with_suffix(".svg"))
    return svg.write(target, svg.line_chart(series, spec.get("title", ""), x, y, logx, logy))


def plot_runlogs(paths, out, x: str = "decision_steps", y: str = "episode_return_mean",
                 title: str = "") -> Path:
    return plot(paths, {"x": x, "y": y, "title": title}, out)


def probe_chart(report, out, bound: dict | None = None, title: str = "") -> Path:
    """Log-log chart of a VarianceProbeReport with an optional bound line."""
    ds = list(report.deltas)
    series = [svg.Series(report.kind or "trace", ds, [report.mean(d) for d in ds],
                         [report.ci95(d) for d in ds] if len(report.seeds) > 1 else None)]
    if bound is not None:
        ys = [theorem1_bound(bound.get("T", 1.0), bound.get("c", 1.0), d, bound.get("sigma_min", 1.0))
              for d in ds]
        series.append(svg.Series(BOUND_LABEL, ds, ys, dashed=True, color="#555555"))
    if not title and len(ds) > 1 and all(report.mean(d) > 0 for d in ds):
        title = f"slope {report.slope:.2f}"
    return svg.write(out, svg.line_chart(series, title, "delta", "trace estimate", True, True))
