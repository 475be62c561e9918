"""Tiny hand-rolled SVG emission.

Matplotlib SVGs embed run-dependent ids, which would break the byte-identical
output guarantee; these helpers produce plain, reproducible markup instead.
"""

from __future__ import annotations

import numpy as np

_HEADER = '<?xml version="1.0" encoding="UTF-8"?>\n'


def _fit(points, size, margin):
    pts = np.concatenate([np.atleast_2d(p) for p in points])
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    span = np.maximum(hi - lo, 1e-12)
    scale = (size - 2 * margin) / span.max()

    def tx(p):
        p = np.atleast_2d(p)
        q = (p - lo) * scale + margin
        q[:, 1] = size - q[:, 1]  # y up
        return q

    return tx, scale


def polylines_svg(polylines, path, widths=None, size=800, margin=20,
                  color="#222222") -> None:
    polylines = [np.asarray(p, dtype=float) for p in polylines if len(p) >= 2]
    if not polylines:
        with open(path, "w") as fh:
            fh.write(_HEADER + f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}"/>\n')
        return
    tx, scale = _fit(polylines, size, margin)
    parts = [_HEADER,
             f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
             f'viewBox="0 0 {size} {size}">\n']
    for i, p in enumerate(polylines):
        q = tx(p)
        d = "M " + " L ".join(f"{x:.2f} {y:.2f}" for x, y in q)
        w = (widths[i] * scale) if widths is not None else 1.0
        parts.append(f'<path d="{d}" fill="none" stroke="{color}" stroke-width="{max(w, 0.5):.2f}"/>\n')
    parts.append("</svg>\n")
    with open(path, "w") as fh:
        fh.write("".join(parts))


def scatter_svg(xs, ys, path, size=640, margin=40, fits=None, labels=("x", "y"),
                point_color="#3366cc") -> None:
    """Scatter plot with optional fitted curves ((xline, yline) pairs)."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    pts = np.stack([xs, ys], axis=1)
    all_pts = [pts] + ([np.stack(f, axis=1) for f in fits] if fits else [])
    tx, _ = _fit(all_pts, size, margin)
    parts = [_HEADER,
             f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
             f'viewBox="0 0 {size} {size}">\n',
             f'<rect x="0" y="0" width="{size}" height="{size}" fill="white"/>\n']
    # axes box
    parts.append(f'<rect x="{margin}" y="{margin}" width="{size-2*margin}" '
                 f'height="{size-2*margin}" fill="none" stroke="#888888"/>\n')
    if fits:
        for f in fits:
            q = tx(np.stack(f, axis=1))
            d = "M " + " L ".join(f"{x:.2f} {y:.2f}" for x, y in q)
            parts.append(f'<path d="{d}" fill="none" stroke="#cc3333" stroke-width="1.5"/>\n')
    for x, y in tx(pts):
        parts.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="3" fill="{point_color}" fill-opacity="0.7"/>\n')
    parts.append(f'<text x="{size/2:.0f}" y="{size-8}" font-size="12" text-anchor="middle">{labels[0]}</text>\n')
    parts.append(f'<text x="12" y="{size/2:.0f}" font-size="12" text-anchor="middle" '
                 f'transform="rotate(-90 12 {size/2:.0f})">{labels[1]}</text>\n')
    parts.append("</svg>\n")
    with open(path, "w") as fh:
        fh.write("".join(parts))


def ternary_svg(points, path, size=640, margin=40, labels=("I", "Y", "X")) -> None:
    """Triangular plot; points are (x, y) pairs in the standard ternary frame."""
    h = np.sqrt(3.0) / 2.0
    corners = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, h]])
    tx, _ = _fit([corners], size, margin)
    parts = [_HEADER,
             f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
             f'viewBox="0 0 {size} {size}">\n',
             f'<rect x="0" y="0" width="{size}" height="{size}" fill="white"/>\n']
    tri = tx(corners)
    d = "M " + " L ".join(f"{x:.2f} {y:.2f}" for x, y in tri) + " Z"
    parts.append(f'<path d="{d}" fill="none" stroke="#444444"/>\n')
    anchors = ["end", "start", "middle"]
    offsets = [(-6, 12), (6, 12), (0, -8)]
    for (cx, cy), lab, anc, (ox, oy) in zip(tri, labels, anchors, offsets):
        parts.append(f'<text x="{cx+ox:.2f}" y="{cy+oy:.2f}" font-size="14" '
                     f'text-anchor="{anc}">{lab}</text>\n')
    for x, y in tx(np.atleast_2d(np.asarray(points, dtype=float))):
        parts.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="4" fill="#3366cc" fill-opacity="0.7"/>\n')
    parts.append("</svg>\n")
    with open(path, "w") as fh:
        fh.write("".join(parts))


def step_curve_svg(xs, ys, path, size=640, margin=40, labels=("x", "y"),
                   logx=False) -> None:
    """Monotone curve (e.g. a CDF); optionally log-scaled in x."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if logx:
        xs = np.log10(np.maximum(xs, 1e-12))
        labels = (f"log10 {labels[0]}", labels[1])
    pts = np.stack([xs, ys], axis=1)
    tx, _ = _fit([pts], size, margin)
    q = tx(pts)
    d = "M " + " L ".join(f"{x:.2f} {y:.2f}" for x, y in q)
    parts = [_HEADER,
             f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
             f'viewBox="0 0 {size} {size}">\n',
             f'<rect x="0" y="0" width="{size}" height="{size}" fill="white"/>\n',
             f'<rect x="{margin}" y="{margin}" width="{size-2*margin}" '
             f'height="{size-2*margin}" fill="none" stroke="#888888"/>\n',
             f'<path d="{d}" fill="none" stroke="#3366cc" stroke-width="1.5"/>\n',
             f'<text x="{size/2:.0f}" y="{size-8}" font-size="12" text-anchor="middle">{labels[0]}</text>\n',
             f'<text x="12" y="{size/2:.0f}" font-size="12" text-anchor="middle" '
             f'transform="rotate(-90 12 {size/2:.0f})">{labels[1]}</text>\n',
             "</svg>\n"]
    with open(path, "w") as fh:
        fh.write("".join(parts))
