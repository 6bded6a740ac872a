"""Direct SVG output: line charts with bands, log-log charts and region scatters."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from xml.sax.saxutils import escape

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2")


@dataclass
class Series:
    label: str
    x: list
    y: list
    band: list | None = None    # half widths, same length as y
    dashed: bool = False
    color: str | None = None


def _tick(v: float) -> str:
    if v == 0:
        return "0"
    a = abs(v)
    if a >= 1e4 or a < 1e-2:
        return f"{v:.1e}"
    return f"{v:.3g}"


@dataclass
class _Frame:
    width: int = 720
    height: int = 420
    left: int = 70
    right: int = 170
    top: int = 30
    bottom: int = 50
    logx: bool = False
    logy: bool = False
    xr: tuple = (0.0, 1.0)
    yr: tuple = (0.0, 1.0)
    parts: list = field(default_factory=list)

    def _t(self, v, log):
        return math.log10(v) if log else v

    def px(self, x):
        lo, hi = (self._t(v, self.logx) for v in self.xr)
        f = 0.5 if hi == lo else (self._t(x, self.logx) - lo) / (hi - lo)
        return self.left + f * (self.width - self.left - self.right)

    def py(self, y):
        lo, hi = (self._t(v, self.logy) for v in self.yr)
        f = 0.5 if hi == lo else (self._t(y, self.logy) - lo) / (hi - lo)
        return self.height - self.bottom - f * (self.height - self.top - self.bottom)


def _range(vals, log):
    vals = [v for v in vals if math.isfinite(v) and (v > 0 or not log)]
    if not vals:
        return (1.0, 10.0) if log else (0.0, 1.0)
    lo, hi = min(vals), max(vals)
    if lo == hi:
        if log:
            return lo / 2, hi * 2
        pad = abs(lo) * 0.1 or 1.0
        return lo - pad, hi + pad
    return lo, hi


def _axes(fr: _Frame, title, xlabel, ylabel):
    p = fr.parts
    x0, x1 = fr.left, fr.width - fr.right
    y0, y1 = fr.height - fr.bottom, fr.top
    p.append(f'<rect x="{x0}" y="{y1}" width="{x1 - x0}" height="{y0 - y1}" fill="none" stroke="#444"/>')
    for k in range(5):
        for axis in "xy":
            lo, hi = fr.xr if axis == "x" else fr.yr
            log = fr.logx if axis == "x" else fr.logy
            if log:
                v = 10 ** (math.log10(lo) + k / 4 * (math.log10(hi) - math.log10(lo)))
            else:
                v = lo + k / 4 * (hi - lo)
            if axis == "x":
                X = fr.px(v)
                p.append(f'<line x1="{X:.1f}" y1="{y0}" x2="{X:.1f}" y2="{y0 + 5}" stroke="#444"/>')
                p.append(f'<text x="{X:.1f}" y="{y0 + 18}" font-size="11" text-anchor="middle">{_tick(v)}</text>')
            else:
                Y = fr.py(v)
                p.append(f'<line x1="{x0 - 5}" y1="{Y:.1f}" x2="{x0}" y2="{Y:.1f}" stroke="#444"/>')
                p.append(f'<text x="{x0 - 8}" y="{Y + 4:.1f}" font-size="11" text-anchor="end">{_tick(v)}</text>')
    p.append(f'<text x="{(x0 + x1) / 2:.1f}" y="{fr.height - 12}" font-size="12" text-anchor="middle">{escape(xlabel)}</text>')
    p.append(f'<text x="16" y="{(y0 + y1) / 2:.1f}" font-size="12" text-anchor="middle" '
             f'transform="rotate(-90 16 {(y0 + y1) / 2:.1f})">{escape(ylabel)}</text>')
    if title:
        p.append(f'<text x="{(x0 + x1) / 2:.1f}" y="18" font-size="14" text-anchor="middle">{escape(title)}</text>')


def _doc(fr: _Frame) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{fr.width}" height="{fr.height}" '
            f'viewBox="0 0 {fr.width} {fr.height}">')
    return "\n".join([head, '<rect width="100%" height="100%" fill="white"/>', *fr.parts, "</svg>"]) + "\n"


def line_chart(series: list[Series], title: str = "", xlabel: str = "", ylabel: str = "",
               logx: bool = False, logy: bool = False) -> str:
    """Polylines with optional shaded bands and a legend. A single point is drawn as a marker."""
    xs = [x for s in series for x in s.x]
    ys = []
    for s in series:
        for i, y in enumerate(s.y):
            b = s.band[i] if s.band is not None and math.isfinite(s.band[i]) else 0.0
            ys.extend([y - b, y + b])
    fr = _Frame(logx=logx, logy=logy, xr=_range(xs, logx), yr=_range(ys, logy))
    _axes(fr, title, xlabel, ylabel)
    for k, s in enumerate(series):
        color = s.color or PALETTE[k % len(PALETTE)]
        pts = [(x, y) for x, y in zip(s.x, s.y) if math.isfinite(y) and (not logy or y > 0)]
        if s.band is not None and len(pts) > 1:
            up = [(x, y + b) for x, y, b in zip(s.x, s.y, s.band) if math.isfinite(b)]
            dn = [(x, max(y - b, 1e-300) if logy else y - b) for x, y, b in zip(s.x, s.y, s.band) if math.isfinite(b)]
            poly = " ".join(f"{fr.px(x):.1f},{fr.py(y):.1f}" for x, y in up + dn[::-1])
            if poly:
                fr.parts.append(f'<polygon points="{poly}" fill="{color}" fill-opacity="0.18" stroke="none"/>')
        if len(pts) == 1:
            x, y = pts[0]
            fr.parts.append(f'<circle cx="{fr.px(x):.1f}" cy="{fr.py(y):.1f}" r="4" fill="{color}"/>')
        elif pts:
            dash = ' stroke-dasharray="6,4"' if s.dashed else ""
            path = " ".join(f"{fr.px(x):.1f},{fr.py(y):.1f}" for x, y in pts)
            fr.parts.append(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="2"{dash}/>')
        ly = fr.top + 16 + 18 * k
        lx = fr.width - fr.right + 12
        fr.parts.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 20}" y2="{ly - 4}" stroke="{color}" stroke-width="3"/>')
        fr.parts.append(f'<text x="{lx + 26}" y="{ly}" font-size="11" class="legend">{escape(s.label)}</text>')
    return _doc(fr)


def region_scatter(points, radii, metric: str = "l1", labels=("dim 0", "dim 1"), title: str = "",
                   highlight=None) -> str:
    """Anchor points with their safe regions: diamonds for L1 balls, circles for L2 balls.

    ``radii`` are already in state units (``None`` entries draw no region).
    """
    xs, ys = [], []
    for (x, y), r in zip(points, radii):
        r = r or 0.0
        xs += [x - r, x + r]
        ys += [y - r, y + r]
    fr = _Frame(right=40, xr=_range(xs, False), yr=_range(ys, False))
    _axes(fr, title, labels[0], labels[1])
    sx = (fr.width - fr.left - fr.right) / ((fr.xr[1] - fr.xr[0]) or 1.0)
    sy = (fr.height - fr.top - fr.bottom) / ((fr.yr[1] - fr.yr[0]) or 1.0)
    for k, ((x, y), r) in enumerate(zip(points, radii)):
        hot = highlight is not None and highlight[k]
        color = PALETTE[1] if hot else PALETTE[0]
        cx, cy = fr.px(x), fr.py(y)
        if r:
            if metric == "l1":
                pts = [(cx + r * sx, cy), (cx, cy - r * sy), (cx - r * sx, cy), (cx, cy + r * sy)]
                poly = " ".join(f"{a:.1f},{b:.1f}" for a, b in pts)
                fr.parts.append(f'<polygon class="region" points="{poly}" fill="{color}" fill-opacity="0.08" stroke="{color}" stroke-opacity="0.5"/>')
            else:
                fr.parts.append(f'<ellipse class="region" cx="{cx:.1f}" cy="{cy:.1f}" rx="{r * sx:.1f}" ry="{r * sy:.1f}" '
                                f'fill="{color}" fill-opacity="0.08" stroke="{color}" stroke-opacity="0.5"/>')
        fr.parts.append(f'<circle cx="{cx:.1f}" cy="{cy:.1f}" r="2" fill="{color}"/>')
    return _doc(fr)


def write(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path
