"""Standalone SVG log-log plot of eigenvalue error curves."""
from __future__ import annotations

import math
from xml.sax.saxutils import escape

__all__ = ["error_curves_svg"]

_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
           "#e377c2", "#7f7f7f"]


def _decades(lo, hi):
    return list(range(math.floor(lo), math.ceil(hi) + 1))


def error_curves_svg(curves, title: str = "Error curves", slope: float | None = None,
                     width: int = 640, height: int = 480) -> str:
    """``curves``: list of ``{"label", "dofs", "errors"}``.

    Draws error against dof count on log-log axes, one polyline per curve,
    plus a reference-slope triangle for ``|lam_h - lam| ~ dof^(-slope/2)``
    (in 2D, ``h ~ dof^(-1/2)``) when ``slope`` is given.
    """
    pts = [(d, e) for c in curves for d, e in zip(c["dofs"], c["errors"])
           if d > 0 and e is not None and e > 0 and math.isfinite(e)]
    if not pts:
        raise ValueError("no positive data to plot")
    lx = [math.log10(d) for d, _ in pts]
    ly = [math.log10(e) for _, e in pts]
    x0, x1 = math.floor(min(lx)), math.ceil(max(lx))
    y0, y1 = math.floor(min(ly)), math.ceil(max(ly))
    if x1 == x0:
        x1 += 1
    if y1 == y0:
        y1 += 1
    ml, mr, mt, mb = 80, 150, 40, 60
    pw, ph = width - ml - mr, height - mt - mb

    def X(v):
        return ml + (v - x0) / (x1 - x0) * pw

    def Y(v):
        return mt + (y1 - v) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<text x="{ml + pw / 2:.1f}" y="22" text-anchor="middle" font-size="14">'
           f'{escape(title)}</text>',
           f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for d in _decades(x0, x1):
        xx = X(d)
        out.append(f'<line x1="{xx:.1f}" y1="{mt}" x2="{xx:.1f}" y2="{mt + ph}" '
                   'stroke="#ddd"/>')
        out.append(f'<text x="{xx:.1f}" y="{mt + ph + 18}" text-anchor="middle">'
                   f'1e{d}</text>')
    for d in _decades(y0, y1):
        yy = Y(d)
        out.append(f'<line x1="{ml}" y1="{yy:.1f}" x2="{ml + pw}" y2="{yy:.1f}" '
                   'stroke="#ddd"/>')
        out.append(f'<text x="{ml - 6}" y="{yy + 4:.1f}" text-anchor="end">1e{d}</text>')
    out.append(f'<text x="{ml + pw / 2:.1f}" y="{height - 15}" text-anchor="middle">'
               'degrees of freedom</text>')
    out.append(f'<text x="20" y="{mt + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 20 {mt + ph / 2:.1f})">|error|</text>')
    for i, c in enumerate(curves):
        color = _COLORS[i % len(_COLORS)]
        pp = [(X(math.log10(d)), Y(math.log10(e))) for d, e in zip(c["dofs"], c["errors"])
              if d > 0 and e is not None and e > 0 and math.isfinite(e)]
        if not pp:
            continue
        coords = " ".join(f"{a:.1f},{b:.1f}" for a, b in pp)
        out.append(f'<polyline points="{coords}" fill="none" stroke="{color}" '
                   'stroke-width="2"/>')
        for a, b in pp:
            out.append(f'<circle cx="{a:.1f}" cy="{b:.1f}" r="3" fill="{color}"/>')
        ly_ = mt + 16 + 18 * i
        out.append(f'<line x1="{ml + pw + 10}" y1="{ly_}" x2="{ml + pw + 30}" y2="{ly_}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{ml + pw + 35}" y="{ly_ + 4}">{escape(str(c["label"]))}</text>')
    if slope is not None and slope > 0:
        # triangle anchored near the lower-left data region
        ax = x0 + 0.55 * (x1 - x0)
        dx = 0.25 * (x1 - x0)
        ay = y0 + 0.15 * (y1 - y0) + slope / 2 * dx
        bx, by = ax + dx, ay - slope / 2 * dx
        out.append(f'<polygon points="{X(ax):.1f},{Y(ay):.1f} {X(bx):.1f},{Y(by):.1f} '
                   f'{X(ax):.1f},{Y(by):.1f}" fill="none" stroke="black" '
                   'stroke-dasharray="4,3"/>')
        out.append(f'<text x="{X(ax) - 4:.1f}" y="{(Y(ay) + Y(by)) / 2:.1f}" '
                   f'text-anchor="end">O(h^{slope:g})</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
