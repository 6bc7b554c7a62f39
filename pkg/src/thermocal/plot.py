"""Dependency-free SVG line chart of temperature profiles.

Output bytes depend only on the input values, so plots can be golden-tested.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import InputError

WIDTH, HEIGHT = 640, 400
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 60, 20, 20, 50
COLORS = {"original": "#808080", "gt": "#000000", "enhanced": "#ff0000"}
ORDER = ("original", "gt", "enhanced")


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def render_svg(profiles) -> str:
    """``profiles`` maps kind -> TemperatureProfile (or a list of profiles with ``kind``)."""
    if not isinstance(profiles, dict):
        profiles = {p.kind: p for p in profiles}
    if not profiles:
        raise InputError("nothing to plot")
    series = [(k, np.asarray(profiles[k].values, dtype=float)) for k in ORDER if k in profiles]
    n = max(len(v) for _, v in series)
    lo = min(float(v.min()) for _, v in series)
    hi = max(float(v.max()) for _, v in series)
    if hi - lo < 1e-9:
        lo, hi = lo - 1.0, hi + 1.0
    pad = 0.05 * (hi - lo)
    lo, hi = lo - pad, hi + pad
    pw = WIDTH - MARGIN_L - MARGIN_R
    ph = HEIGHT - MARGIN_T - MARGIN_B

    def sx(i):
        return MARGIN_L + (pw * i / (n - 1) if n > 1 else pw / 2)

    def sy(t):
        return MARGIN_T + ph * (hi - t) / (hi - lo)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>',
        f'<line x1="{MARGIN_L}" y1="{MARGIN_T + ph}" x2="{MARGIN_L + pw}" y2="{MARGIN_T + ph}" stroke="#000000"/>',
        f'<line x1="{MARGIN_L}" y1="{MARGIN_T}" x2="{MARGIN_L}" y2="{MARGIN_T + ph}" stroke="#000000"/>',
    ]
    for j in range(5):
        t = lo + (hi - lo) * j / 4
        y = sy(t)
        out.append(f'<text x="{MARGIN_L - 6}" y="{_fmt(y + 4)}" font-size="11" text-anchor="end">{t:.1f}</text>')
    for j in range(5):
        i = (n - 1) * j / 4
        out.append(
            f'<text x="{_fmt(sx(i))}" y="{MARGIN_T + ph + 16}" font-size="11" text-anchor="middle">{i:.0f}</text>'
        )
    out.append(f'<text x="{MARGIN_L + pw / 2:.2f}" y="{HEIGHT - 10}" font-size="12" '
               f'text-anchor="middle">frame index</text>')
    out.append(f'<text x="14" y="{MARGIN_T + ph / 2:.2f}" font-size="12" text-anchor="middle" '
               f'transform="rotate(-90 14 {MARGIN_T + ph / 2:.2f})">temperature (°C)</text>')
    for kind, v in series:
        color = COLORS[kind]
        if len(v) == 1:
            out.append(f'<circle class="{kind}" cx="{_fmt(sx(0))}" cy="{_fmt(sy(v[0]))}" r="3" fill="{color}"/>')
            continue
        pts = " ".join(f"{_fmt(sx(i))},{_fmt(sy(t))}" for i, t in enumerate(v))
        out.append(f'<polyline class="{kind}" fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
    for j, (kind, _) in enumerate(series):
        y = MARGIN_T + 14 + 16 * j
        x = MARGIN_L + pw - 110
        out.append(f'<line x1="{x}" y1="{y - 4}" x2="{x + 20}" y2="{y - 4}" stroke="{COLORS[kind]}" stroke-width="2"/>')
        out.append(f'<text x="{x + 26}" y="{y}" font-size="11">{kind}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_plot(profiles, path) -> Path:
    path = Path(path)
    path.write_text(render_svg(profiles), encoding="utf-8")
    return path
