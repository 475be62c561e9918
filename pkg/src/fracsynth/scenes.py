"""Renderable 3D scenes: the benched slope (with optional fractal surface
roughness), a simplified kinematic block-removal filter, and the stacked-box
scene whose openings stand in for joints between cubic blocks.

The slope is an eastward-facing excavation: bench faces rise westward at the
bench angle, separated by horizontal berms.  Scene coordinates follow the
geometry kernel convention (x=east, y=north, z=up) with the lower bench toe
along x=0, z=0.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .geometry import TriMesh, normal_to_orientation, orientation_to_normal
from .noise import FractalNoise
from .traces import Trace


@dataclass(frozen=True)
class SlopeSpec:
    length: float = 100.0          # m, along y (north)
    total_height: float = 20.0     # m
    bench_height: float = 10.0     # m per bench
    bench_angle: float = 75.0      # degrees from horizontal
    berm_width: float = 1.5        # m, horizontal step between benches
    facing: str = "east"

    def __post_init__(self):
        if min(self.length, self.total_height, self.bench_height) <= 0.0:
            raise ValidationError("slope dimensions must be positive")
        if not (0.0 < self.bench_angle <= 90.0):
            raise ValidationError("bench_angle must be in (0, 90]")
        if self.berm_width < 0.0:
            raise ValidationError("berm_width must be >= 0")
        if self.facing != "east":
            raise ValidationError("only an east-facing slope is supported")
        n = self.total_height / self.bench_height
        if abs(n - round(n)) > 1e-9 or round(n) < 1:
            raise ValidationError("total_height must be a whole number of benches")

    @property
    def n_benches(self) -> int:
        return int(round(self.total_height / self.bench_height))

    def profile(self) -> np.ndarray:
        """(x, z) polyline of the slope cross-section, toe first."""
        run = self.bench_height / math.tan(math.radians(self.bench_angle))
        pts = [(0.0, 0.0)]
        x, z = 0.0, 0.0
        for b in range(self.n_benches):
            x -= run
            z += self.bench_height
            pts.append((x, z))
            if b < self.n_benches - 1 and self.berm_width > 0.0:
                x -= self.berm_width
                pts.append((x, z))
        return np.asarray(pts)

    def horizontal_depth(self) -> float:
        p = self.profile()
        return float(p[0, 0] - p[-1, 0])


@dataclass(frozen=True)
class RoughnessSpec:
    amplitude: float = 0.08    # m
    frequency: float = 0.5     # 1/m
    octaves: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.amplitude < 0.0:
            raise ValidationError("amplitude must be >= 0")
        if self.octaves < 1:
            raise ValidationError("octaves must be >= 1")


def build_slope_mesh(spec: SlopeSpec, resolution: float = 1.0) -> TriMesh:
    """Structured-grid mesh of the bench profile swept along the slope length.

    UVs are proportional to arc length: u along the slope, v along the
    profile.  Fails when the resolution cannot resolve the berm.
    """
    if resolution <= 0.0:
        raise ValidationError("resolution must be > 0")
    if spec.berm_width > 0.0 and spec.n_benches > 1 and resolution > spec.berm_width:
        raise ValidationError(
            f"resolution {resolution} m is coarser than the berm width {spec.berm_width} m"
        )
    prof = spec.profile()
    # profile stations, subdividing each leg to ~resolution
    stations = [prof[0]]
    arcs = [0.0]
    for a, b in zip(prof[:-1], prof[1:]):
        leg = float(np.hypot(*(b - a)))
        n = max(1, int(math.ceil(leg / resolution)))
        for k in range(1, n + 1):
            stations.append(a + (b - a) * (k / n))
            arcs.append(arcs[-1] + leg / n)
    stations = np.asarray(stations)
    arcs = np.asarray(arcs)
    total_arc = arcs[-1]

    ny = max(1, int(math.ceil(spec.length / resolution)))
    ys = np.linspace(0.0, spec.length, ny + 1)

    ns = len(stations)
    verts = np.empty(((ny + 1) * ns, 3))
    uv = np.empty(((ny + 1) * ns, 2))
    for iy, y in enumerate(ys):
        base = iy * ns
        verts[base:base + ns, 0] = stations[:, 0]
        verts[base:base + ns, 1] = y
        verts[base:base + ns, 2] = stations[:, 1]
        uv[base:base + ns, 0] = y / spec.length
        uv[base:base + ns, 1] = arcs / total_arc

    tris = []
    for iy in range(ny):
        for js in range(ns - 1):
            a = iy * ns + js
            b = a + 1
            c = a + ns
            d = c + 1
            tris.append((a, d, b))
            tris.append((a, c, d))
    mesh = TriMesh(vertices=verts, triangles=np.asarray(tris), uv=uv)
    # ensure outward (east/up) winding
    if mesh.triangle_normals()[:, [0, 2]].sum() < 0.0:
        flipped = mesh.triangles[:, [0, 2, 1]]
        mesh = TriMesh(vertices=verts, triangles=flipped, uv=uv)
    return mesh


def apply_perlin_roughness(mesh: TriMesh, r: RoughnessSpec) -> TriMesh:
    """Displace vertices along their normals by fractal noise in [-amp, +amp].

    Boundary vertices are pinned so the silhouette stays exact.
    """
    if r.amplitude == 0.0:
        return mesh
    noise = FractalNoise(seed=[int(r.seed), 0xF00D], octaves=r.octaves,
                         frequency=r.frequency)
    v = mesh.vertices
    n = noise.sample3(v[:, 0], v[:, 1], v[:, 2])
    disp = r.amplitude * n
    disp[mesh.boundary_vertices()] = 0.0
    moved = v + disp[:, None] * mesh.vertex_normals()
    return TriMesh(vertices=moved, triangles=mesh.triangles, uv=mesh.uv)


# ---------------------------------------------------------------------------
# Simplified kinematic filter (Markland daylight/friction test)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KinematicFlag:
    mode: str          # "plane" or "wedge"
    fracture_a: int
    fracture_b: int | None
    plunge: float      # degrees
    trend: float       # degrees


def _face_orientation(mesh: TriMesh):
    normals = mesh.triangle_normals()
    areas = mesh.triangle_areas()
    mean_n = (normals * areas[:, None]).sum(axis=0)
    o = normal_to_orientation(mean_n)
    return o.dip, o.dip_direction


def _trend_plunge_of_direction(d: np.ndarray):
    if d[2] > 0.0:
        d = -d
    horiz = math.hypot(d[0], d[1])
    plunge = math.degrees(math.atan2(-d[2], horiz))
    trend = math.degrees(math.atan2(d[0], d[1])) % 360.0 if horiz > 1e-12 else 0.0
    return plunge, trend


def _within_lateral(trend: float, face_dd: float, limit: float) -> bool:
    diff = abs((trend - face_dd + 180.0) % 360.0 - 180.0)
    return diff <= limit


def kinematic_filter(dfn, slope_mesh: TriMesh, friction_angle: float,
                     lateral_limit: float = 20.0):
    """Markland daylight/friction screening of planes and fracture-pair wedges.

    A single plane is flagged when its dip vector daylights the face (plunge
    below the face dip, above the friction angle, trend within the lateral
    limit of the face dip direction); a wedge when the intersection line of
    two genuinely intersecting fractures does the same.  This is a simplified
    substitute for a full 3D block-stability analysis: it only reports
    candidate removals and leaves both the network and the mesh untouched.
    """
    if not (0.0 <= friction_angle < 90.0):
        raise ValidationError("friction_angle must be in [0, 90)")
    face_dip, face_dd = _face_orientation(slope_mesh)
    flags = []
    normals = [f.polygon.plane.normal for f in dfn.fractures]

    for i, f in enumerate(dfn.fractures):
        o = normal_to_orientation(normals[i])
        plunge, trend = o.dip, o.dip_direction
        if plunge < face_dip and plunge > friction_angle and _within_lateral(trend, face_dd, lateral_limit):
            flags.append(KinematicFlag("plane", i, None, plunge, trend))

    from .dfn import _polygons_intersect  # internal reuse

    n = len(dfn.fractures)
    for i in range(n):
        for j in range(i + 1, n):
            if dfn.fractures[i].set_id == dfn.fractures[j].set_id:
                continue
            d = np.cross(normals[i], normals[j])
            if np.linalg.norm(d) < 1e-9:
                continue
            plunge, trend = _trend_plunge_of_direction(d)
            if not (plunge < face_dip and plunge > friction_angle
                    and _within_lateral(trend, face_dd, lateral_limit)):
                continue
            if not _polygons_intersect(dfn.fractures[i].polygon, dfn.fractures[j].polygon):
                continue
            flags.append(KinematicFlag("wedge", i, j, plunge, trend))
    return dfn, flags


def save_kinematic_report_csv(flags: list, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["mode", "fracture_a", "fracture_b", "plunge_deg", "trend_deg"])
        for f in flags:
            w.writerow([f.mode, f.fracture_a,
                        "" if f.fracture_b is None else f.fracture_b,
                        f"{f.plunge:.4f}", f"{f.trend:.4f}"])


# ---------------------------------------------------------------------------
# Stacked-box scene
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoxSceneSpec:
    box_dims: tuple = (0.59, 0.39, 0.60)   # (width y, depth x, height z), metres
    levels: tuple = (3, 2)                 # boxes per level, bottom to top
    gap: float = 0.01                      # m opening between boxes

    def __post_init__(self):
        if min(self.box_dims) <= 0.0:
            raise ValidationError("box dimensions must be positive")
        if self.gap < 0.0:
            raise ValidationError("boxes overlap (negative gap)")
        if not self.levels or min(self.levels) < 1:
            raise ValidationError("each level needs at least one box")


def _box_mesh(lo, hi, uv_scale=1.0):
    """Axis-aligned box with per-face (unshared) vertices and planar UVs."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    faces = [
        (0, 1.0), (0, -1.0), (1, 1.0), (1, -1.0), (2, 1.0), (2, -1.0),
    ]
    verts, uvs, tris = [], [], []
    for axis, sign in faces:
        u_ax, v_ax = [a for a in range(3) if a != axis]
        plane_val = hi[axis] if sign > 0 else lo[axis]
        corners = []
        for uu, vv in ((0, 0), (1, 0), (1, 1), (0, 1)):
            p = np.empty(3)
            p[axis] = plane_val
            p[u_ax] = lo[u_ax] + uu * (hi[u_ax] - lo[u_ax])
            p[v_ax] = lo[v_ax] + vv * (hi[v_ax] - lo[v_ax])
            corners.append(p)
            uvs.append((p[u_ax] / uv_scale, p[v_ax] / uv_scale))
        base = len(verts)
        verts.extend(corners)
        if sign > 0:
            tris.extend([(base, base + 1, base + 2), (base, base + 2, base + 3)])
        else:
            tris.extend([(base, base + 2, base + 1), (base, base + 3, base + 2)])
    return np.asarray(verts), np.asarray(uvs), np.asarray(tris)


def _strip_mesh(x, y0, y1, z0, z1, uv_scale=1.0):
    """Vertical quad strip on the front plane x=const (east-facing)."""
    verts = np.array([[x, y0, z0], [x, y1, z0], [x, y1, z1], [x, y0, z1]])
    uvs = np.stack([verts[:, 1] / uv_scale, verts[:, 2] / uv_scale], axis=1)
    tris = np.array([(0, 1, 2), (0, 2, 3)])
    return verts, uvs, tris


def build_box_scene(spec: BoxSceneSpec):
    """Stacked boxes plus gap-centreline traces of thickness = gap width.

    Front-face gaps are sealed with coplanar strips so the openings render as
    dark joints rather than see-through slots; each adjacency (side-by-side
    within a level, and between stacked levels) emits one centreline trace.
    """
    w, d, h = spec.box_dims
    g = spec.gap
    verts, uvs, tris = [], [], []
    offset = 0

    def add(v, u, t):
        nonlocal offset
        verts.append(v)
        uvs.append(u)
        tris.append(t + offset)
        offset += len(v)

    level_extents = []
    boxes_per_level = []
    for li, count in enumerate(spec.levels):
        z0 = li * (h + g)
        row = []
        for bi in range(count):
            y0 = bi * (w + g)
            lo = np.array([0.0, y0, z0])
            hi = np.array([d, y0 + w, z0 + h])
            add(*_box_mesh(lo, hi))
            row.append((y0, y0 + w))
        boxes_per_level.append(row)
        level_extents.append((row[0][0], row[-1][1], z0, z0 + h))

    traces = []
    front_x = d
    # vertical gaps within each level
    for li, row in enumerate(boxes_per_level):
        z0, z1 = level_extents[li][2], level_extents[li][3]
        for (y_a0, y_a1), (y_b0, y_b1) in zip(row[:-1], row[1:]):
            yc = 0.5 * (y_a1 + y_b0)
            if g > 0.0:
                add(*_strip_mesh(front_x, y_a1, y_b0, z0, z1))
            poly = np.array([[front_x, yc, z0], [front_x, yc, z1]])
            traces.append(Trace(polyline=poly, length=z1 - z0, set_id=1000 + li,
                                thickness=g,
                                normals=np.tile([1.0, 0.0, 0.0], (2, 1))))
    # horizontal gaps between levels
    for li in range(len(spec.levels) - 1):
        lo0, hi0, _, ztop = level_extents[li]
        lo1, hi1, zbot, _ = level_extents[li + 1]
        y_lo = max(lo0, lo1)
        y_hi = min(hi0, hi1)
        if y_hi <= y_lo:
            continue
        zc = 0.5 * (ztop + zbot)
        if g > 0.0:
            v = np.array([[front_x, y_lo, ztop], [front_x, y_hi, ztop],
                          [front_x, y_hi, zbot], [front_x, y_lo, zbot]])
            u = np.stack([v[:, 1], v[:, 2]], axis=1)
            add(v, u, np.array([(0, 1, 2), (0, 2, 3)]))
        poly = np.array([[front_x, y_lo, zc], [front_x, y_hi, zc]])
        traces.append(Trace(polyline=poly, length=y_hi - y_lo, set_id=2000 + li,
                            thickness=g,
                            normals=np.tile([1.0, 0.0, 0.0], (2, 1))))

    mesh = TriMesh(
        vertices=np.concatenate(verts),
        triangles=np.concatenate(tris),
        uv=np.concatenate(uvs),
    )
    return mesh, traces
