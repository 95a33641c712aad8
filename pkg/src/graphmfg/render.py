"""Static SVG node-link snapshots of a node field."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

from .graph import Graph

# 8 stops sampled from viridis
COLORMAP = np.array([
    (68, 1, 84), (70, 50, 126), (54, 92, 141), (39, 127, 142),
    (31, 161, 135), (74, 193, 109), (160, 218, 57), (253, 231, 37),
], dtype=np.float64)


def colors(values) -> list[str]:
    """Hex colours after scaling ``values`` to [min, max] of the frame."""
    v = np.asarray(values, dtype=np.float64)
    lo, hi = float(v.min()), float(v.max())
    t = np.zeros_like(v) if hi <= lo else (v - lo) / (hi - lo)
    pos = t * (len(COLORMAP) - 1)
    k = np.minimum(pos.astype(int), len(COLORMAP) - 2)
    frac = (pos - k)[:, None]
    rgb = np.rint(COLORMAP[k] * (1 - frac) + COLORMAP[k + 1] * frac).astype(int)
    return [f"#{r:02x}{g:02x}{b:02x}" for r, g, b in rgb]


def render_svg(graph: Graph, values, title: str = "", size: int = 480) -> str:
    pad = 24
    xy = graph.coords
    lo = xy.min(axis=0)
    span = float(max(np.ptp(xy, axis=0).max(), 1e-12))
    scale = (size - 2 * pad) / span
    px = pad + (xy[:, 0] - lo[0]) * scale
    py = size - pad - (xy[:, 1] - lo[1]) * scale  # y axis up
    spacing = np.median(np.hypot(px[graph.src] - px[graph.dst], py[graph.src] - py[graph.dst]))
    r = max(0.35 * spacing, 1.0)
    v = np.asarray(values, dtype=np.float64)
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size + 20}" '
        f'viewBox="0 0 {size} {size + 20}">',
        '<rect width="100%" height="100%" fill="white"/>',
        '<g stroke="#b0b0b0" stroke-width="0.5">',
    ]
    for a, b in zip(graph.src.tolist(), graph.dst.tolist()):
        out.append(f'<line x1="{px[a]:.2f}" y1="{py[a]:.2f}" x2="{px[b]:.2f}" y2="{py[b]:.2f}"/>')
    out.append("</g>\n<g>")
    for i, c in enumerate(colors(v)):
        out.append(f'<circle cx="{px[i]:.2f}" cy="{py[i]:.2f}" r="{r:.2f}" fill="{c}"/>')
    out.append("</g>")
    label = f"{title}  [{v.min():.3g}, {v.max():.3g}]" if title else f"[{v.min():.3g}, {v.max():.3g}]"
    out.append(f'<text x="{pad}" y="{size + 12}" font-family="sans-serif" font-size="12">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_svg(path, graph: Graph, values, title: str = "") -> None:
    with open(path, "w") as fh:
        fh.write(render_svg(graph, values, title))
