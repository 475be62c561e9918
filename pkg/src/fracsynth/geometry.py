"""Geometry kernel: vectors, orientations, planes, planar polygons, triangle
meshes, and the intersection / stitching primitives shared by every other
module.

Conventions: coordinates in metres, x = east, y = north, z = up.  A plane
orientation is (dip, dip_direction) in degrees, with the unit normal

    n = (sin dip * sin dd, sin dip * cos dd, cos dip)

which always lies in the upper hemisphere (z >= 0) for dip in [0, 90].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

#: Default snap tolerance (metres): below rendered pixel scale, above float noise.
EPS_SNAP = 1e-4

#: Cosine threshold for "straight-through" continuation at junction nodes.
_STRAIGHT_COS = -(1.0 - 1e-9)


@dataclass(frozen=True)
class Vec3:
    """A 3D position/direction in metres (x=east, y=north, z=up)."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.z)):
            raise ValidationError(f"Vec3 components must be finite, got {(self.x, self.y, self.z)}")

    def to_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=np.float64)

    @classmethod
    def from_array(cls, a) -> "Vec3":
        a = np.asarray(a, dtype=np.float64)
        return cls(float(a[0]), float(a[1]), float(a[2]))


def as_point(p) -> np.ndarray:
    """Coerce Vec3 / sequence to a (3,) float array."""
    if isinstance(p, Vec3):
        return p.to_array()
    a = np.asarray(p, dtype=np.float64)
    if a.shape != (3,):
        raise ValidationError(f"expected a 3D point, got shape {a.shape}")
    return a


@dataclass(frozen=True)
class Orientation:
    """Plane attitude: dip in [0, 90] deg, dip_direction in [0, 360) deg."""

    dip: float
    dip_direction: float

    def __post_init__(self):
        if not (0.0 <= self.dip <= 90.0):
            raise ValidationError(f"dip must be in [0, 90], got {self.dip}")
        if not (0.0 <= self.dip_direction < 360.0):
            raise ValidationError(f"dip_direction must be in [0, 360), got {self.dip_direction}")


def orientation_to_normal(o: Orientation) -> np.ndarray:
    """Unit normal of the plane with the given attitude (upper hemisphere)."""
    dip = math.radians(o.dip)
    dd = math.radians(o.dip_direction)
    return np.array(
        [math.sin(dip) * math.sin(dd), math.sin(dip) * math.cos(dd), math.cos(dip)],
        dtype=np.float64,
    )


def normal_to_orientation(n) -> Orientation:
    """Inverse of :func:`orientation_to_normal`; flips n into the upper hemisphere."""
    n = np.asarray(n, dtype=np.float64)
    norm = np.linalg.norm(n)
    if norm == 0.0 or not np.all(np.isfinite(n)):
        raise ValidationError("normal must be a finite nonzero vector")
    n = n / norm
    if n[2] < 0.0:
        n = -n
    horiz = math.hypot(n[0], n[1])
    dip = math.degrees(math.atan2(horiz, n[2]))
    dd = math.degrees(math.atan2(n[0], n[1])) % 360.0 if horiz >= 1e-15 else 0.0
    return Orientation(dip=min(dip, 90.0), dip_direction=dd)


@dataclass(frozen=True)
class Plane:
    """Point + unit normal.  The normal is renormalised on construction."""

    point: np.ndarray
    normal: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "point", as_point(self.point))
        n = np.asarray(self.normal, dtype=np.float64)
        norm = np.linalg.norm(n)
        if norm < 1e-12:
            raise ValidationError("plane normal must be nonzero")
        object.__setattr__(self, "normal", n / norm)

    def signed_distance(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return (pts - self.point) @ self.normal

    def basis(self):
        """Orthonormal (u, v) spanning the plane."""
        n = self.normal
        a = np.array([0.0, 0.0, 1.0]) if abs(n[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
        u = np.cross(a, n)
        u /= np.linalg.norm(u)
        v = np.cross(n, u)
        return u, v

    def to_2d(self, points) -> np.ndarray:
        u, v = self.basis()
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64)) - self.point
        return np.stack([pts @ u, pts @ v], axis=-1)


def _newell_normal(pts: np.ndarray) -> np.ndarray:
    nxt = np.roll(pts, -1, axis=0)
    n = np.array(
        [
            np.sum((pts[:, 1] - nxt[:, 1]) * (pts[:, 2] + nxt[:, 2])),
            np.sum((pts[:, 2] - nxt[:, 2]) * (pts[:, 0] + nxt[:, 0])),
            np.sum((pts[:, 0] - nxt[:, 0]) * (pts[:, 1] + nxt[:, 1])),
        ]
    )
    return n


def _cross2(a, b) -> float:
    return a[0] * b[1] - a[1] * b[0]


def _segments_properly_intersect_2d(p1, p2, p3, p4, eps=1e-12) -> bool:
    d1 = _cross2(p4 - p3, p1 - p3)
    d2 = _cross2(p4 - p3, p2 - p3)
    d3 = _cross2(p2 - p1, p3 - p1)
    d4 = _cross2(p2 - p1, p4 - p1)
    return (d1 * d2 < -eps) and (d3 * d4 < -eps)


@dataclass(frozen=True)
class Polygon3:
    """A planar, non-self-intersecting polygon embedded in 3D.

    Vertices are stored as an (n, 3) array in order; ``plane`` holds the
    supporting plane.  Construction validates planarity (max out-of-plane
    deviation 1e-6 m) and in-plane simplicity.
    """

    vertices: np.ndarray
    plane: Plane

    MAX_PLANE_DEV = 1e-6

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64)
        if v.ndim != 2 or v.shape[1] != 3 or v.shape[0] < 3:
            raise ValidationError("polygon needs >= 3 vertices of dimension 3")
        if not np.all(np.isfinite(v)):
            raise ValidationError("polygon vertices must be finite")
        object.__setattr__(self, "vertices", v)
        dev = np.abs(self.plane.signed_distance(v))
        if dev.max() > self.MAX_PLANE_DEV:
            raise ValidationError(f"polygon deviates {dev.max():.3g} m from its plane")
        p2 = self.plane.to_2d(v)
        n = len(p2)
        for i in range(n):
            for j in range(i + 1, n):
                if abs(i - j) in (0, 1) or (i == 0 and j == n - 1):
                    continue
                if _segments_properly_intersect_2d(p2[i], p2[(i + 1) % n], p2[j], p2[(j + 1) % n]):
                    raise ValidationError("polygon is self-intersecting")

    @classmethod
    def from_points(cls, points) -> "Polygon3":
        pts = np.asarray(points, dtype=np.float64)
        n = _newell_normal(pts)
        if np.linalg.norm(n) < 1e-14:
            raise ValidationError("degenerate polygon (zero area)")
        plane = Plane(point=pts.mean(axis=0), normal=n)
        return cls(vertices=pts, plane=plane)

    def area(self) -> float:
        p2 = self.plane.to_2d(self.vertices)
        x, y = p2[:, 0], p2[:, 1]
        return 0.5 * abs(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))

    def centroid(self) -> np.ndarray:
        p2 = self.plane.to_2d(self.vertices)
        x, y = p2[:, 0], p2[:, 1]
        cr = x * np.roll(y, -1) - np.roll(x, -1) * y
        a = 0.5 * np.sum(cr)
        if abs(a) < 1e-14:
            return self.vertices.mean(axis=0)
        cx = np.sum((x + np.roll(x, -1)) * cr) / (6.0 * a)
        cy = np.sum((y + np.roll(y, -1)) * cr) / (6.0 * a)
        u, v = self.plane.basis()
        return self.plane.point + cx * u + cy * v

    def aabb(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)


def clip_polygon_halfspace(poly: Polygon3, plane: Plane, keep_positive: bool) -> Polygon3 | None:
    """Sutherland-Hodgman clip of a convex polygon against one half-space.

    Returns None when nothing remains.
    """
    verts = poly.vertices
    sd = plane.signed_distance(verts)
    if not keep_positive:
        sd = -sd
    out = []
    n = len(verts)
    for i in range(n):
        a, b = verts[i], verts[(i + 1) % n]
        da, db = sd[i], sd[(i + 1) % n]
        if da >= 0.0:
            out.append(a)
            if db < 0.0:
                t = da / (da - db)
                out.append(a + t * (b - a))
        elif db >= 0.0:
            t = da / (da - db)
            out.append(a + t * (b - a))
    if len(out) < 3:
        return None
    out = np.asarray(out)
    # Drop consecutive duplicates introduced by vertices on the clip plane.
    keep = [0]
    for i in range(1, len(out)):
        if np.linalg.norm(out[i] - out[keep[-1]]) > 1e-12:
            keep.append(i)
    if len(keep) > 1 and np.linalg.norm(out[keep[-1]] - out[keep[0]]) <= 1e-12:
        keep.pop()
    if len(keep) < 3:
        return None
    return Polygon3(vertices=out[keep], plane=poly.plane)


@dataclass(frozen=True)
class TriMesh:
    """Indexed triangle mesh with optional per-vertex UVs in [0, 1]^2."""

    vertices: np.ndarray
    triangles: np.ndarray
    uv: np.ndarray | None = None

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64)
        t = np.asarray(self.triangles, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise ValidationError("vertices must be (n, 3)")
        if t.ndim != 2 or t.shape[1] != 3:
            raise ValidationError("triangles must be (m, 3)")
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise ValidationError("triangle indices out of range")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        if self.uv is not None:
            uv = np.asarray(self.uv, dtype=np.float64)
            if uv.shape != (len(v), 2):
                raise ValidationError("uv must be (n_vertices, 2)")
            object.__setattr__(self, "uv", uv)
        areas = self.triangle_areas()
        if areas.size and areas.min() <= 1e-14:
            raise ValidationError("mesh contains degenerate (zero-area) triangles")

    def triangle_corners(self):
        v = self.vertices
        t = self.triangles
        return v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]

    def triangle_normals(self) -> np.ndarray:
        a, b, c = self.triangle_corners()
        n = np.cross(b - a, c - a)
        norm = np.linalg.norm(n, axis=1, keepdims=True)
        return n / norm

    def triangle_areas(self) -> np.ndarray:
        a, b, c = self.triangle_corners()
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)

    def vertex_normals(self) -> np.ndarray:
        a, b, c = self.triangle_corners()
        fn = np.cross(b - a, c - a)  # area-weighted
        out = np.zeros_like(self.vertices)
        for k in range(3):
            np.add.at(out, self.triangles[:, k], fn)
        norm = np.linalg.norm(out, axis=1, keepdims=True)
        norm[norm == 0.0] = 1.0
        return out / norm

    def boundary_edges(self) -> np.ndarray:
        """(m, 2) vertex index pairs of edges used by exactly one triangle."""
        t = self.triangles
        edges = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        edges = np.sort(edges, axis=1)
        uniq, counts = np.unique(edges, axis=0, return_counts=True)
        return uniq[counts == 1]

    def boundary_vertices(self) -> np.ndarray:
        """Indices of vertices on edges used by exactly one triangle."""
        return np.unique(self.boundary_edges())

    def aabb(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)


def merge_meshes(meshes) -> TriMesh:
    verts, tris, uvs = [], [], []
    offset = 0
    has_uv = all(m.uv is not None for m in meshes)
    for m in meshes:
        verts.append(m.vertices)
        tris.append(m.triangles + offset)
        if has_uv:
            uvs.append(m.uv)
        offset += len(m.vertices)
    return TriMesh(
        vertices=np.concatenate(verts),
        triangles=np.concatenate(tris),
        uv=np.concatenate(uvs) if has_uv else None,
    )


# ---------------------------------------------------------------------------
# OBJ import/export (vertices, optional UVs, triangular faces only)
# ---------------------------------------------------------------------------

def save_obj(mesh: TriMesh, path) -> None:
    lines = []
    for v in mesh.vertices:
        lines.append(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}")
    if mesh.uv is not None:
        for uv in mesh.uv:
            lines.append(f"vt {uv[0]:.9g} {uv[1]:.9g}")
        for t in mesh.triangles:
            lines.append(f"f {t[0]+1}/{t[0]+1} {t[1]+1}/{t[1]+1} {t[2]+1}/{t[2]+1}")
    else:
        for t in mesh.triangles:
            lines.append(f"f {t[0]+1} {t[1]+1} {t[2]+1}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_obj(path) -> TriMesh:
    verts, uvs, faces = [], [], []
    with open(path) as fh:
        for raw in fh:
            parts = raw.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "vt":
                uvs.append([float(x) for x in parts[1:3]])
            elif parts[0] == "f":
                if len(parts) != 4:
                    raise ValidationError("only triangular faces are supported")
                faces.append([int(p.split("/")[0]) - 1 for p in parts[1:4]])
    uv = None
    if uvs and len(uvs) == len(verts):
        uv = np.asarray(uvs, dtype=np.float64)
    return TriMesh(
        vertices=np.asarray(verts, dtype=np.float64),
        triangles=np.asarray(faces, dtype=np.int64),
        uv=uv,
    )


# ---------------------------------------------------------------------------
# Polygon x mesh intersection
# ---------------------------------------------------------------------------

def _point_in_polygon_2d(pt, poly2d, eps) -> bool:
    """Crossing-number test; points within eps of an edge count as inside."""
    n = len(poly2d)
    inside = False
    px, py = pt
    for i in range(n):
        x1, y1 = poly2d[i]
        x2, y2 = poly2d[(i + 1) % n]
        # distance to edge
        dx, dy = x2 - x1, y2 - y1
        ll = dx * dx + dy * dy
        if ll > 0.0:
            t = ((px - x1) * dx + (py - y1) * dy) / ll
            t = min(1.0, max(0.0, t))
            qx, qy = x1 + t * dx, y1 + t * dy
            if (px - qx) ** 2 + (py - qy) ** 2 <= eps * eps:
                return True
        if (y1 > py) != (y2 > py):
            xint = x1 + (py - y1) * dx / dy
            if px < xint:
                inside = not inside
    return inside


def _clip_segment_to_polygon(a3, b3, poly: Polygon3, eps) -> list:
    """Sub-segments of [a3, b3] (coplanar with poly) inside the polygon."""
    p2 = poly.plane.to_2d(poly.vertices)
    a2 = poly.plane.to_2d(a3[None, :])[0]
    b2 = poly.plane.to_2d(b3[None, :])[0]
    d2 = b2 - a2
    seg_len = np.linalg.norm(d2)
    if seg_len < 1e-12:
        return []
    ts = [0.0, 1.0]
    n = len(p2)
    for i in range(n):
        e1, e2 = p2[i], p2[(i + 1) % n]
        r = d2
        s = e2 - e1
        denom = r[0] * s[1] - r[1] * s[0]
        if abs(denom) < 1e-15:
            continue
        qp = e1 - a2
        t = (qp[0] * s[1] - qp[1] * s[0]) / denom
        u = (qp[0] * r[1] - qp[1] * r[0]) / denom
        if -1e-12 <= t <= 1.0 + 1e-12 and -1e-12 <= u <= 1.0 + 1e-12:
            ts.append(min(1.0, max(0.0, t)))
    ts = sorted(set(ts))
    out = []
    for t0, t1 in zip(ts[:-1], ts[1:]):
        if (t1 - t0) * seg_len < 1e-12:
            continue
        tm = 0.5 * (t0 + t1)
        if _point_in_polygon_2d(a2 + tm * d2, p2, eps):
            out.append((a3 + t0 * (b3 - a3), a3 + t1 * (b3 - a3)))
    return out


def _triangle_plane_chord(tri_pts, sd, eps):
    """Chord(s) where a triangle crosses a plane, from vertex signed distances.

    Returns a list of (p, q) pairs (usually one) or [] when the triangle does
    not produce a 1D intersection.  `sd` values within eps are snapped to the
    plane.
    """
    s = np.where(np.abs(sd) <= eps, 0.0, sd)
    pos = s > 0
    neg = s < 0
    zero = s == 0
    nz = int(zero.sum())
    if nz == 3:
        return []  # coplanar handled separately
    if nz == 2:
        i, j = np.nonzero(zero)[0]
        return [(tri_pts[i], tri_pts[j])]
    if nz == 1:
        if pos.any() and neg.any():
            k = int(np.nonzero(zero)[0][0])
            i = int(np.nonzero(pos)[0][0])
            j = int(np.nonzero(neg)[0][0])
            t = s[i] / (s[i] - s[j])
            q = tri_pts[i] + t * (tri_pts[j] - tri_pts[i])
            return [(tri_pts[k], q)]
        return []  # touches at a single vertex
    if pos.all() or neg.all():
        return []
    # classic two-edge crossing
    pts = []
    for i in range(3):
        j = (i + 1) % 3
        if s[i] * s[j] < 0.0:
            t = s[i] / (s[i] - s[j])
            pts.append(tri_pts[i] + t * (tri_pts[j] - tri_pts[i]))
    if len(pts) != 2:
        return []
    return [(pts[0], pts[1])]


def _coplanar_overlap_segments(tri_pts, poly: Polygon3, eps):
    """Boundary segments of the overlap region of a coplanar triangle and polygon."""
    tri_poly = Polygon3.from_points(tri_pts)
    region = poly
    for i in range(3):
        a, b = tri_pts[i], tri_pts[(i + 1) % 3]
        edge_dir = b - a
        inward = np.cross(tri_poly.plane.normal, edge_dir)
        region = clip_polygon_halfspace(region, Plane(point=a, normal=inward), keep_positive=True)
        if region is None:
            return []
    segs = []
    n = len(region.vertices)
    for i in range(n):
        p, q = region.vertices[i], region.vertices[(i + 1) % n]
        if np.linalg.norm(q - p) > eps:
            segs.append((p, q))
    return segs


def intersect_polygon_mesh(poly: Polygon3, mesh: TriMesh, eps: float = EPS_SNAP,
                           return_tris: bool = False) -> list:
    """Intersection segments of a planar polygon with a triangle mesh.

    Returns an unordered list of (2, 3) float arrays (or (segment, triangle
    index) pairs with ``return_tris``).  Coplanar overlaps contribute the
    overlap region's boundary segments.
    """
    if eps <= 0.0:
        raise ValidationError("eps must be positive")
    sd = poly.plane.signed_distance(mesh.vertices)
    tri_sd = sd[mesh.triangles]
    crosses = ~(np.all(tri_sd > eps, axis=1) | np.all(tri_sd < -eps, axis=1))
    if not crosses.any():
        return []
    pmin, pmax = poly.aabb()
    v = mesh.vertices
    out = []
    for ti in np.nonzero(crosses)[0]:
        tri = mesh.triangles[ti]
        tri_pts = v[tri]
        # cheap AABB reject against the (eps-inflated) polygon box
        if (tri_pts.max(axis=0) < pmin - eps).any() or (tri_pts.min(axis=0) > pmax + eps).any():
            continue
        s = tri_sd[ti]
        if np.all(np.abs(s) <= eps):
            pairs = _coplanar_overlap_segments(tri_pts, poly, eps)
        else:
            pairs = []
            for a, b in _triangle_plane_chord(tri_pts, s, eps):
                pairs.extend(_clip_segment_to_polygon(a, b, poly, eps))
        out.extend((p, q, int(ti)) for p, q in pairs)
    # a chord lying exactly on a shared mesh edge is reported by both adjacent
    # triangles; keep the first occurrence only
    inv = 1.0 / eps
    seen = set()
    unique = []
    for p, q, ti in out:
        if np.linalg.norm(q - p) <= 1e-12:
            continue
        ka = tuple(np.floor(p * inv).astype(np.int64))
        kb = tuple(np.floor(q * inv).astype(np.int64))
        key = (ka, kb) if ka <= kb else (kb, ka)
        if key in seen:
            continue
        seen.add(key)
        unique.append((p, q, ti))
    if return_tris:
        return [(np.stack([p, q]), ti) for p, q, ti in unique]
    return [np.stack([p, q]) for p, q, ti in unique]


# ---------------------------------------------------------------------------
# Segment stitching
# ---------------------------------------------------------------------------

class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, i):
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, i, j):
        ri, rj = self.find(i), self.find(j)
        if ri != rj:
            # keep the smaller root so representatives are deterministic
            if rj < ri:
                ri, rj = rj, ri
            self.parent[rj] = ri


def _merge_endpoints(points: np.ndarray, eps: float) -> np.ndarray:
    """Union endpoints within eps via a spatial hash; returns node id per point."""
    uf = _UnionFind(len(points))
    cell = {}
    inv = 1.0 / max(eps, 1e-300)
    keys = np.floor(points * inv).astype(np.int64)
    for i, k in enumerate(map(tuple, keys)):
        cell.setdefault(k, []).append(i)
    eps2 = eps * eps
    for i, k in enumerate(map(tuple, keys)):
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for dz in (-1, 0, 1):
                    for j in cell.get((k[0] + dx, k[1] + dy, k[2] + dz), ()):
                        if j > i and np.sum((points[i] - points[j]) ** 2) <= eps2:
                            uf.union(i, j)
    return np.array([uf.find(i) for i in range(len(points))])


def stitch_segments(segments, eps: float = EPS_SNAP) -> list:
    """Chain raw segments into maximal polylines.

    Endpoints within eps are merged onto a single node (the first endpoint
    encountered keeps its coordinates).  Degree-2 nodes always join their two
    segments; at junctions of degree >= 3 only exactly straight-through
    continuations pair up, so crossings stay split and the junction remains
    an explicit polyline vertex for node typing.
    """
    if eps <= 0.0:
        raise ValidationError("eps must be positive")
    segments = [np.asarray(s, dtype=np.float64) for s in segments]
    if not segments:
        return []
    pts = np.concatenate([s for s in segments])  # 2 rows per segment
    labels = _merge_endpoints(pts, eps)
    node_coord = {}
    for i, lab in enumerate(labels):
        node_coord.setdefault(lab, pts[i])

    # ends[(seg, which)] -> node; incident[node] -> list of (seg, which)
    incident: dict = {}
    end_node = {}
    for si in range(len(segments)):
        for which in (0, 1):
            nid = labels[2 * si + which]
            end_node[(si, which)] = nid
            incident.setdefault(nid, []).append((si, which))

    def away_dir(si, which):
        a = node_coord[end_node[(si, which)]]
        b = node_coord[end_node[(si, 1 - which)]]
        d = b - a
        n = np.linalg.norm(d)
        return d / n if n > 0 else d

    # continuation[(seg, which)] = (seg', which') meaning: arriving at this end,
    # leave through the partner end.
    continuation = {}
    for nid in sorted(incident):
        ends = sorted(incident[nid])
        if len(ends) == 2:
            continuation[ends[0]] = ends[1]
            continuation[ends[1]] = ends[0]
        elif len(ends) > 2:
            dirs = {e: away_dir(*e) for e in ends}
            used = set()
            for e in ends:
                if e in used:
                    continue
                best = None
                for f in ends:
                    if f is e or f in used or f == e:
                        continue
                    c = float(np.dot(dirs[e], dirs[f]))
                    if c <= _STRAIGHT_COS and (best is None or c < best[0]):
                        best = (c, f)
                if best is not None:
                    f = best[1]
                    continuation[e] = f
                    continuation[f] = e
                    used.add(e)
                    used.add(f)

    visited = [False] * len(segments)
    polylines = []

    def walk(si, start_which):
        chain = [node_coord[end_node[(si, start_which)]]]
        cur, which = si, start_which
        while True:
            visited[cur] = True
            exit_end = (cur, 1 - which)
            chain.append(node_coord[end_node[exit_end]])
            nxt = continuation.get(exit_end)
            if nxt is None or visited[nxt[0]]:
                break
            cur, which = nxt
        return np.asarray(chain)

    # open chains first: ends with no continuation
    for si in range(len(segments)):
        for which in (0, 1):
            if not visited[si] and continuation.get((si, which)) is None:
                polylines.append(walk(si, which))
    # remaining cycles
    for si in range(len(segments)):
        if not visited[si]:
            polylines.append(walk(si, 0))
    return polylines


def polyline_length(polyline: np.ndarray) -> float:
    p = np.asarray(polyline, dtype=np.float64)
    return float(np.sum(np.linalg.norm(np.diff(p, axis=0), axis=1)))


def fit_plane(points) -> Plane:
    """Least-squares plane through a point cloud (smallest principal axis)."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) < 3:
        raise ValidationError("need at least 3 points to fit a plane")
    centroid = pts.mean(axis=0)
    _, _, vt = np.linalg.svd(pts - centroid, full_matrices=False)
    normal = vt[-1]
    if normal[2] < 0.0 or (normal[2] == 0.0 and normal[0] < 0.0):
        normal = -normal
    return Plane(point=centroid, normal=normal)
