"""Standalone SVG writers for step-function paths and covariance heatmaps.

Only string formatting is used, so the output is byte-stable for a given
input and needs no plotting library.
"""

from __future__ import annotations

import json
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2")
WIDTH, HEIGHT = 640, 400
MARGIN = 56


def _num(v: float) -> str:
    return f"{v:.3f}".rstrip("0").rstrip(".")


def _header(width, height, title, metadata) -> list[str]:
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
    ]
    if metadata is not None:
        blob = json.dumps(metadata, sort_keys=True).replace("]]>", "]]]]><![CDATA[>")
        out.append(f"<metadata><![CDATA[{blob}]]></metadata>")
    out.append(f'<rect width="{width}" height="{height}" fill="white"/>')
    out.append(f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" font-size="13">'
               f"{escape(title)}</text>")
    return out


def step_plot(breakpoints, values, labels, title: str = "", metadata: dict | None = None,
              x_range=(0.0, 1.0)) -> str:
    """Each column of ``values`` (segments x series) drawn as a step function over alpha.

    Segment ``j`` spans ``[breakpoints[j-1], breakpoints[j]]`` with the
    ends of ``x_range`` closing the first and last segments.
    """
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    edges = np.concatenate([[x_range[0]], np.asarray(breakpoints, dtype=float), [x_range[1]]])
    finite = values[np.isfinite(values)]
    lo, hi = (float(finite.min()), float(finite.max())) if finite.size else (0.0, 1.0)
    if hi - lo < 1e-12:
        lo, hi = lo - 0.5, hi + 0.5
    pad = 0.05 * (hi - lo)
    lo, hi = lo - pad, hi + pad
    x0, x1 = MARGIN, WIDTH - 20
    y0, y1 = HEIGHT - MARGIN, 30

    def sx(a):
        return x0 + (a - x_range[0]) / (x_range[1] - x_range[0]) * (x1 - x0)

    def sy(v):
        return y0 + (v - lo) / (hi - lo) * (y1 - y0)

    out = _header(WIDTH, HEIGHT, title, metadata)
    out.append(f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>')
    out.append(f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>')
    for t in np.linspace(x_range[0], x_range[1], 6):
        out.append(f'<text x="{sx(t):.2f}" y="{y0 + 16}" text-anchor="middle">{_num(t)}</text>')
    for v in np.linspace(lo + pad, hi - pad, 5):
        out.append(f'<text x="{x0 - 6}" y="{sy(v) + 4:.2f}" text-anchor="end">{v:.3g}</text>')
        out.append(f'<line x1="{x0}" y1="{sy(v):.2f}" x2="{x1}" y2="{sy(v):.2f}" '
                   'stroke="#e0e0e0"/>')
    out.append(f'<text x="{(x0 + x1) / 2:.1f}" y="{HEIGHT - 14}" text-anchor="middle">alpha</text>')
    for k in range(values.shape[1]):
        color = PALETTE[k % len(PALETTE)]
        pts = []
        for j in range(values.shape[0]):
            v = values[j, k]
            if not np.isfinite(v):
                continue
            pts.append(f"{sx(edges[j]):.2f},{sy(v):.2f}")
            pts.append(f"{sx(edges[j + 1]):.2f},{sy(v):.2f}")
        if pts:
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" '
                       f'points="{" ".join(pts)}"/>')
        out.append(f'<text x="{x1 - 4}" y="{40 + 14 * k}" text-anchor="end" fill="{color}">'
                   f"{escape(str(labels[k]))}</text>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _diverging(v: float, scale: float) -> str:
    t = 0.0 if scale <= 0 else max(-1.0, min(1.0, v / scale))
    if t >= 0:
        r, g, b = 255, int(round(255 * (1 - t))), int(round(255 * (1 - t)))
    else:
        r, g, b = int(round(255 * (1 + t))), int(round(255 * (1 + t))), 255
    return f"#{r:02x}{g:02x}{b:02x}"


def heatmap(matrices, grid, labels, title: str = "", metadata: dict | None = None) -> str:
    """Side-by-side heatmaps, one per (G, G) matrix, on a shared colour scale."""
    mats = [np.asarray(m, dtype=float) for m in matrices]
    grid = np.asarray(grid, dtype=float)
    G = grid.size
    cell = max(4, min(40, 240 // max(G, 1)))
    panel = cell * G
    width = MARGIN + len(mats) * (panel + MARGIN)
    height = panel + 2 * MARGIN + 20
    scale = max((float(np.abs(m).max()) for m in mats if m.size), default=1.0)
    out = _header(width, height, title, metadata)
    for k, (m, lab) in enumerate(zip(mats, labels)):
        left = MARGIN + k * (panel + MARGIN)
        top = MARGIN
        out.append(f'<text x="{left + panel / 2:.1f}" y="{top - 8}" text-anchor="middle">'
                   f"{escape(str(lab))}</text>")
        for i in range(G):
            for j in range(G):
                out.append(f'<rect x="{left + j * cell}" y="{top + i * cell}" width="{cell}" '
                           f'height="{cell}" fill="{_diverging(m[i, j], scale)}">'
                           f"<title>({_num(grid[i])}, {_num(grid[j])}): {m[i, j]:.4g}</title></rect>")
        out.append(f'<rect x="{left}" y="{top}" width="{panel}" height="{panel}" '
                   'fill="none" stroke="black"/>')
        for i in range(G):
            out.append(f'<text x="{left - 4}" y="{top + (i + 0.5) * cell + 4:.1f}" '
                       f'text-anchor="end" font-size="9">{_num(grid[i])}</text>')
    out.append(f'<text x="{MARGIN}" y="{height - 12}">colour scale: +/-{scale:.4g}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
