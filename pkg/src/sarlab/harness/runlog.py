"""Append-only CSV run logs with a versioned header."""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1
HEADER_LINE = f"# sarlab-runlog v{SCHEMA_VERSION}"
COLUMNS = (
    "run_id", "seed", "delta", "algo", "controller", "decision_steps", "micro_steps",
    "physical_time_s", "episode_return_mean", "episode_return_ci95_half",
    "mean_hold_duration_s", "wallclock_s",
)
SUMMARY_HEADER_LINE = f"# sarlab-summary v{SCHEMA_VERSION}"
SUMMARY_COLUMNS = (
    "run_id", "delta", "algo", "controller", "decision_steps", "n_seeds",
    "episode_return_mean", "episode_return_ci95_half", "mean_hold_duration_s",
)
PROBE_COLUMNS = ("delta", "seed", "trace_estimate", "n_traj")


class SchemaError(ValueError):
    pass


def fmt(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "nan" if math.isnan(v) else "%.10g" % v
    return str(v)


def ci95_half(values) -> float:
    """Normal-approximation 95% half width, ``1.96 sd / sqrt(n)`` with ``ddof=1``."""
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return math.nan
    return float(1.96 * v.std(ddof=1) / math.sqrt(v.size))


class CsvWriter:
    """Writes a header once, then rows, flushing after every row."""

    def __init__(self, path, columns, header_line: str | None = None):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.columns = tuple(columns)
        self._fh = self.path.open("w", newline="")
        if header_line:
            self._fh.write(header_line + "\n")
        self._fh.write(",".join(self.columns) + "\n")
        self._fh.flush()

    def write(self, row: dict):
        missing = set(self.columns) - set(row)
        if missing:
            raise SchemaError(f"row lacks {sorted(missing)}")
        self._fh.write(",".join(fmt(row[c]) for c in self.columns) + "\n")
        self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_csv(path) -> tuple[tuple, list[dict]]:
    """Columns and rows of a sarlab CSV (comment lines skipped, numbers parsed)."""
    lines = [ln for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")]
    if not lines:
        raise SchemaError(f"{path} is empty")
    reader = csv.DictReader(io.StringIO("\n".join(lines)))
    rows = []
    for r in reader:
        rows.append({k: _parse(v) for k, v in r.items()})
    return tuple(reader.fieldnames), rows


def _parse(v: str):
    try:
        return int(v)
    except ValueError:
        try:
            return float(v)
        except ValueError:
            return v


def summarize(rows) -> list[dict]:
    """Average runlog rows over seeds at matching (run_id, delta, controller, decision_steps)."""
    groups = {}
    for r in rows:
        key = (r["run_id"], r["delta"], r["algo"], r["controller"], r["decision_steps"])
        groups.setdefault(key, []).append(r)
    out = []
    for key, rs in sorted(groups.items(), key=lambda kv: (str(kv[0][0]), kv[0][1], kv[0][4])):
        rets = [r["episode_return_mean"] for r in rs]
        out.append({
            "run_id": key[0], "delta": key[1], "algo": key[2], "controller": key[3],
            "decision_steps": key[4], "n_seeds": len(rs),
            "episode_return_mean": float(np.mean(rets)),
            "episode_return_ci95_half": ci95_half(rets),
            "mean_hold_duration_s": float(np.mean([r["mean_hold_duration_s"] for r in rs])),
        })
    return out


def write_summary(path, rows):
    with CsvWriter(path, SUMMARY_COLUMNS, SUMMARY_HEADER_LINE) as w:
        for r in summarize(rows):
            w.write(r)


def strip_columns(text: str, drop=("wallclock_s",)) -> str:
    """CSV text with the named columns removed, for reproducibility comparisons."""
    out = []
    idx = None
    for line in text.splitlines():
        if line.startswith("#"):
            out.append(line)
            continue
        cells = line.split(",")
        if idx is None:
            idx = [i for i, c in enumerate(cells) if c not in drop]
        out.append(",".join(cells[i] for i in idx))
    return "\n".join(out) + "\n"
