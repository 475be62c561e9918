"""Joint-trace extraction and styling.

A trace is the polyline where a fracture meets the scene surface.  Styling
gives it a rendered thickness that grows affinely with its curve length,

    T = (L / 100 m) * (T_max - T_min) + T_min,

clamped at L = 100 m, plus an optional in-surface waviness displacement.
The module also implements the geometry used to label real slopes:
planar joint polygons made wavy by random normal displacement of grid
points, intersected with the surface mesh, with per-trace thickness drawn
uniformly from a stated range.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ValidationError
from .geometry import (
    EPS_SNAP,
    Polygon3,
    TriMesh,
    intersect_polygon_mesh,
    polyline_length,
    stitch_segments,
)
from .noise import FractalNoise

_STREAM_WAVINESS = 0x30
_STREAM_LABEL = 0x40


@dataclass(frozen=True)
class Trace:
    """Surface joint-trace polyline with length L and visual thickness T."""

    polyline: np.ndarray          # (n, 3) on the scene surface
    length: float                 # metres, sum of segment lengths
    set_id: int
    thickness: float = 0.0        # metres; 0 = unstyled
    normals: np.ndarray | None = None  # per-vertex surface normals, if known

    def __post_init__(self):
        p = np.asarray(self.polyline, dtype=np.float64)
        object.__setattr__(self, "polyline", p)
        if self.length <= 0.0:
            raise ValidationError("trace length must be > 0")
        if self.thickness < 0.0:
            raise ValidationError("trace thickness must be >= 0")
        if self.normals is not None:
            n = np.asarray(self.normals, dtype=np.float64)
            if n.shape != p.shape:
                raise ValidationError("normals must match polyline shape")
            object.__setattr__(self, "normals", n)


@dataclass(frozen=True)
class TraceStyle:
    t_min: float = 0.01
    t_max: float = 0.10
    waviness_amplitude: float = 0.03
    waviness_wavelength: float = 2.0

    def __post_init__(self):
        if not (0.0 <= self.t_min <= self.t_max):
            raise ValidationError("need 0 <= t_min <= t_max")
        if self.waviness_amplitude < 0.0:
            raise ValidationError("waviness_amplitude must be >= 0")
        if self.waviness_wavelength <= 0.0:
            raise ValidationError("waviness_wavelength must be > 0")


def thickness(length: float, style: TraceStyle) -> float:
    """Affine visual thickness in the curve length, clamped above 100 m."""
    if length < 0.0:
        raise ValidationError("length must be >= 0")
    if style.t_min > style.t_max:
        raise ValidationError("t_min must not exceed t_max")
    l_eff = min(length, 100.0)
    return (l_eff / 100.0) * (style.t_max - style.t_min) + style.t_min


def _normals_lookup(segments, tri_ids, mesh: TriMesh, eps: float):
    """Map stitched node coordinates to averaged generating-triangle normals."""
    tri_normals = mesh.triangle_normals()
    table: dict = {}
    inv = 1.0 / max(eps, 1e-300)
    for seg, ti in zip(segments, tri_ids):
        n = tri_normals[ti]
        for p in seg:
            key = tuple(np.floor(p * inv).astype(np.int64))
            table.setdefault(key, []).append(n)

    def lookup(p):
        key = tuple(np.floor(p * inv).astype(np.int64))
        best = None
        for dx in (0, -1, 1):
            for dy in (0, -1, 1):
                for dz in (0, -1, 1):
                    ns = table.get((key[0] + dx, key[1] + dy, key[2] + dz))
                    if ns:
                        best = ns if best is None else best + ns
        if not best:
            return np.array([0.0, 0.0, 1.0])
        m = np.mean(best, axis=0)
        nrm = np.linalg.norm(m)
        return m / nrm if nrm > 1e-12 else np.array([0.0, 0.0, 1.0])

    return lookup


def extract_traces(dfn, surface: TriMesh, eps: float = EPS_SNAP) -> list:
    """Unstyled traces from every fracture of a network against a surface mesh.

    Per fracture: polygon/mesh intersection, stitching, and discard of crumbs
    shorter than twice the snap tolerance.
    """
    out = []
    for f in dfn.fractures:
        out.extend(
            _traces_for_polygon(f.polygon, surface, set_id=f.set_id, eps=eps)
        )
    return out


def _traces_for_polygon(poly: Polygon3, surface: TriMesh, set_id: int, eps: float) -> list:
    pairs = intersect_polygon_mesh(poly, surface, eps=eps, return_tris=True)
    if not pairs:
        return []
    segments = [p for p, _ in pairs]
    tri_ids = [t for _, t in pairs]
    lookup = _normals_lookup(segments, tri_ids, surface, eps)
    traces = []
    for polyline in stitch_segments(segments, eps=eps):
        L = polyline_length(polyline)
        if L < 2.0 * eps:
            continue
        normals = np.stack([lookup(p) for p in polyline])
        traces.append(Trace(polyline=polyline, length=L, set_id=set_id, normals=normals))
    return traces


def style_traces(traces: list, style: TraceStyle, seed: int) -> list:
    """Thickness from the affine law + waviness, per trace."""
    out = []
    for i, tr in enumerate(traces):
        wavy = apply_waviness(tr, style, seed=_wav_seed(seed, i))
        out.append(replace(wavy, thickness=thickness(wavy.length, style)))
    return out


def _wav_seed(seed: int, index: int) -> int:
    return (int(seed) << 20) ^ (index + 1)


def _densify(polyline: np.ndarray, max_spacing: float) -> np.ndarray:
    pts = [polyline[0]]
    for a, b in zip(polyline[:-1], polyline[1:]):
        seg = np.linalg.norm(b - a)
        n = max(1, int(math.ceil(seg / max_spacing)))
        for k in range(1, n + 1):
            pts.append(a + (b - a) * (k / n))
    return np.asarray(pts)


def apply_waviness(trace: Trace, style: TraceStyle, seed: int) -> Trace:
    """Lateral in-surface wiggle bounded by +-amplitude; endpoints pinned.

    Vertices move within the local surface tangent plane, perpendicular to the
    local trace direction.  The polyline is densified to resolve the requested
    wavelength, and the (rare) draw that would shorten the curve is damped
    until the length is non-decreasing.
    """
    if style.waviness_amplitude == 0.0:
        return trace
    poly = _densify(trace.polyline, style.waviness_wavelength / 8.0)
    n_pts = len(poly)
    if n_pts < 3:
        return trace

    if trace.normals is not None:
        # interpolate old normals onto the densified polyline by arclength
        old_s = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(trace.polyline, axis=0), axis=1))])
        new_s = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(poly, axis=0), axis=1))])
        normals = np.stack(
            [np.interp(new_s, old_s, trace.normals[:, k]) for k in range(3)], axis=1
        )
    else:
        normals = np.tile(np.array([0.0, 0.0, 1.0]), (n_pts, 1))
    norm = np.linalg.norm(normals, axis=1, keepdims=True)
    norm[norm == 0.0] = 1.0
    normals = normals / norm

    tangents = np.zeros_like(poly)
    tangents[1:-1] = poly[2:] - poly[:-2]
    tangents[0] = poly[1] - poly[0]
    tangents[-1] = poly[-1] - poly[-2]
    tn = np.linalg.norm(tangents, axis=1, keepdims=True)
    tn[tn == 0.0] = 1.0
    tangents /= tn

    lateral = np.cross(normals, tangents)
    ln = np.linalg.norm(lateral, axis=1, keepdims=True)
    ln[ln == 0.0] = 1.0
    lateral /= ln

    arclen = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(poly, axis=0), axis=1))])
    noise = FractalNoise(
        seed=[int(seed) & 0x7FFFFFFF, _STREAM_WAVINESS], octaves=2,
        frequency=1.0 / style.waviness_wavelength,
    )
    offsets = style.waviness_amplitude * noise.sample1(arclen)
    offsets[0] = 0.0
    offsets[-1] = 0.0

    base_len = trace.length
    amp_scale = 1.0
    for _ in range(40):
        displaced = poly + (amp_scale * offsets)[:, None] * lateral
        new_len = polyline_length(displaced)
        if new_len >= base_len - 1e-12:
            break
        amp_scale *= 0.5
    else:
        displaced = poly
        new_len = base_len
    return replace(trace, polyline=displaced, length=max(new_len, base_len),
                   normals=normals)


def label_from_planes(joint_polygons: list, surface: TriMesh, seed: int,
                      thickness_range=(0.01, 0.10), waviness: float = 0.015,
                      grid_res: float = 0.25, eps: float = EPS_SNAP) -> list:
    """Traces from manually fitted joint polygons, real-slope labelling style.

    Each planar polygon is grid-sampled; grid points move normal to the plane
    by a uniform draw in [-waviness, +waviness]; the wavy grid is triangulated
    and intersected with the surface.  With waviness == 0 this reduces exactly
    to the flat polygon/mesh intersection.  Each resulting trace draws its
    thickness uniformly from ``thickness_range``.
    """
    t_lo, t_hi = thickness_range
    if not (0.0 <= t_lo <= t_hi):
        raise ValidationError("invalid thickness_range")
    out = []
    for pi, poly in enumerate(joint_polygons):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), _STREAM_LABEL, pi]))
        if waviness == 0.0:
            traces = _traces_for_polygon(poly, surface, set_id=pi, eps=eps)
        else:
            traces = []
            for tri in _wavy_triangles(poly, rng, waviness, grid_res):
                traces.extend(_traces_for_polygon(tri, surface, set_id=pi, eps=eps))
            # pieces from adjacent grid triangles chain back together
            if traces:
                merged = stitch_segments(
                    [seg for t in traces for seg in _polyline_segments(t.polyline)], eps=eps
                )
                traces = [
                    Trace(polyline=p, length=polyline_length(p), set_id=pi)
                    for p in merged if polyline_length(p) >= 2.0 * eps
                ]
        for tr in traces:
            t = float(rng.uniform(t_lo, t_hi))
            out.append(replace(tr, thickness=t))
    return out


def _polyline_segments(polyline: np.ndarray):
    return [np.stack([a, b]) for a, b in zip(polyline[:-1], polyline[1:])]


def _wavy_triangles(poly: Polygon3, rng, waviness: float, grid_res: float):
    """Displaced-grid triangulation of a planar polygon (cells kept when their
    center is inside the outline)."""
    p2 = poly.plane.to_2d(poly.vertices)
    u, v = poly.plane.basis()
    n = poly.plane.normal
    lo = p2.min(axis=0)
    hi = p2.max(axis=0)
    nx = max(2, int(math.ceil((hi[0] - lo[0]) / grid_res)) + 1)
    ny = max(2, int(math.ceil((hi[1] - lo[1]) / grid_res)) + 1)
    xs = np.linspace(lo[0], hi[0], nx)
    ys = np.linspace(lo[1], hi[1], ny)
    disp = rng.uniform(-waviness, waviness, size=(nx, ny))
    origin = poly.plane.point

    def corner(i, j):
        return origin + xs[i] * u + ys[j] * v + disp[i, j] * n

    from .geometry import _point_in_polygon_2d  # internal reuse

    tris = []
    for i in range(nx - 1):
        for j in range(ny - 1):
            cx = 0.5 * (xs[i] + xs[i + 1])
            cy = 0.5 * (ys[j] + ys[j + 1])
            if not _point_in_polygon_2d(np.array([cx, cy]), p2, 1e-12):
                continue
            a, b, c, d = corner(i, j), corner(i + 1, j), corner(i + 1, j + 1), corner(i, j + 1)
            for pts in ((a, b, c), (a, c, d)):
                arr = np.stack(pts)
                try:
                    tris.append(Polygon3.from_points(arr))
                except ValidationError:
                    continue
    return tris


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------

def save_traces_jsonl(traces: list, path) -> None:
    with open(path, "w") as fh:
        for t in traces:
            rec = {
                "set_id": int(t.set_id),
                "length": round(t.length, 9),
                "thickness": round(t.thickness, 9),
                "polyline": [[round(x, 9) for x in p] for p in t.polyline.tolist()],
            }
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def load_traces_jsonl(path) -> list:
    out = []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            poly = np.asarray(rec["polyline"])
            out.append(Trace(polyline=poly, length=rec["length"],
                             set_id=rec["set_id"], thickness=rec["thickness"]))
    return out


def save_traces_svg(traces: list, path, axes=(1, 2), size: int = 800) -> None:
    """2D projected view for quick inspection (default: y-z, i.e. looking east)."""
    from .svgplot import polylines_svg

    polys = [t.polyline[:, list(axes)] for t in traces]
    widths = [max(t.thickness, 0.002) for t in traces]
    polylines_svg(polys, path, widths=widths, size=size)
