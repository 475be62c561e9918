"""Trace-network topology and block statistics.

Node census follows the standard trace-map convention: an endpoint with no
partner is an I-node, an endpoint abutting another trace's interior is a
Y-node, and an interior-interior crossing is an X-node.  From the census,

    n_lines = (n_i + n_y) / 2
    c_l     = 2 (n_x + n_y) / n_lines     (0 when there are no lines)

where c_l is the average number of connections per line.  Endpoints that
terminate on the map boundary count as I-nodes by default; a flag excludes
them instead.

Block statistics use a deliberate simplification: the region is sliced by
three persistent plane families with jittered spacings and the resulting
lattice cells are measured and classified.  Finite-fracture polyhedral
cutting is out of scope, and every output labels the method accordingly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .blockshape import BlockShapeClass, ClassThresholds, classify_ratios
from .errors import ValidationError
from .geometry import EPS_SNAP, Plane, orientation_to_normal

BLOCK_STATS_METHOD = "jittered-persistent-plane-decomposition"


@dataclass(frozen=True)
class Node:
    point: np.ndarray
    kind: str  # "I", "X" or "Y"


@dataclass(frozen=True)
class TopologySummary:
    n_i: int
    n_x: int
    n_y: int

    @property
    def n_lines(self) -> float:
        return (self.n_i + self.n_y) / 2.0

    @property
    def c_l(self) -> float:
        nl = self.n_lines
        return 2.0 * (self.n_x + self.n_y) / nl if nl > 0 else 0.0

    @property
    def proportions(self):
        total = self.n_i + self.n_x + self.n_y
        if total == 0:
            return (0.0, 0.0, 0.0)
        return (self.n_i / total, self.n_x / total, self.n_y / total)


def project_polylines(traces, plane: Plane) -> list:
    """Project trace polylines into a plane's 2D frame (for face-plane maps)."""
    return [plane.to_2d(t.polyline) for t in traces]


def _on_boundary(p, boundary, eps) -> bool:
    """boundary: (xmin, xmax, ymin, ymax) frame, or (m, 2, 2) edge segments."""
    if boundary is None:
        return False
    b = np.asarray(boundary, dtype=np.float64)
    if b.ndim == 3:
        d = _point_to_segments_dist(p[None, :], b[:, 0, :], b[:, 1, :])
        return bool(d.min() <= eps)
    xmin, xmax, ymin, ymax = boundary
    return (
        abs(p[0] - xmin) <= eps or abs(p[0] - xmax) <= eps
        or abs(p[1] - ymin) <= eps or abs(p[1] - ymax) <= eps
    )


def mesh_boundary_2d(mesh, plane) -> np.ndarray:
    """Projected boundary edges of a surface mesh, for endpoint censoring."""
    edges = mesh.boundary_edges()
    p2 = plane.to_2d(mesh.vertices)
    return np.stack([p2[edges[:, 0]], p2[edges[:, 1]]], axis=1)


def _flatten_segments(polylines):
    """All polyline segments as arrays: starts, ends, owning trace index."""
    a_list, b_list, owner = [], [], []
    for i, p in enumerate(polylines):
        if len(p) < 2:
            continue
        a_list.append(p[:-1])
        b_list.append(p[1:])
        owner.append(np.full(len(p) - 1, i))
    if not a_list:
        z = np.zeros((0, 2))
        return z, z.copy(), np.zeros(0, dtype=np.int64)
    return (np.concatenate(a_list), np.concatenate(b_list),
            np.concatenate(owner).astype(np.int64))


def _point_to_segments_dist(points, seg_a, seg_b):
    """(n_points, n_segments) distance matrix, vectorised."""
    d = seg_b - seg_a                                    # (m, 2)
    ll = np.einsum("ij,ij->i", d, d)
    ll[ll == 0.0] = 1.0
    rel = points[:, None, :] - seg_a[None, :, :]          # (n, m, 2)
    t = np.clip(np.einsum("nmj,mj->nm", rel, d) / ll[None, :], 0.0, 1.0)
    q = rel - t[..., None] * d[None, :, :]
    return np.sqrt(np.einsum("nmj,nmj->nm", q, q))


def classify_nodes(polylines, eps: float = EPS_SNAP * 10, boundary=None,
                   boundary_mode: str = "count") -> list:
    """I/X/Y node census of 2D trace polylines.

    boundary is an optional map frame: either (xmin, xmax, ymin, ymax) or the
    projected boundary edge segments of the mapped surface (see
    :func:`mesh_boundary_2d`).  Endpoints on it are counted as I-nodes
    ("count", the default censoring convention) or dropped entirely
    ("exclude").
    """
    if eps <= 0.0:
        raise ValidationError("eps must be positive")
    if boundary_mode not in ("count", "exclude"):
        raise ValidationError("boundary_mode must be 'count' or 'exclude'")
    polylines = [np.asarray(p, dtype=np.float64) for p in polylines]
    nodes: list[Node] = []

    closed = [len(p) > 2 and np.linalg.norm(p[0] - p[-1]) <= eps for p in polylines]
    seg_a, seg_b, seg_owner = _flatten_segments(polylines)

    # endpoint census (Y when abutting another trace within eps, else I)
    ep_points = []
    ep_owner = []
    for i, poly in enumerate(polylines):
        if closed[i] or len(poly) < 2:
            continue
        for p in (poly[0], poly[-1]):
            ep_points.append(p)
            ep_owner.append(i)
    ep_points = np.asarray(ep_points) if ep_points else np.zeros((0, 2))
    ep_owner = np.asarray(ep_owner, dtype=np.int64)

    endpoint_nodes = []
    if len(ep_points):
        dist = _point_to_segments_dist(ep_points, seg_a, seg_b)
        same = ep_owner[:, None] == seg_owner[None, :]
        dist[same] = np.inf
        near_other = dist.min(axis=1) <= eps if dist.size else np.zeros(len(ep_points), bool)
        for k, p in enumerate(ep_points):
            if boundary is not None and _on_boundary(p, boundary, eps):
                if boundary_mode == "count":
                    endpoint_nodes.append(Node(point=p, kind="I"))
                continue
            endpoint_nodes.append(Node(point=p, kind="Y" if near_other[k] else "I"))
    # endpoint-endpoint contacts produce one junction, not two: merge Y nodes
    # within eps of each other
    merged_y: list[Node] = []
    for n in endpoint_nodes:
        if n.kind == "Y" and any(
            np.linalg.norm(n.point - m.point) <= eps for m in merged_y if m.kind == "Y"
        ):
            continue
        merged_y.append(n)
    nodes.extend(merged_y)

    # crossing census: interior-interior intersections of segments from
    # different traces, vectorised in row chunks
    x_candidates = []
    m = len(seg_a)
    if m:
        d1 = seg_b - seg_a
        chunk = max(1, int(2e6 // max(m, 1)))
        for s0 in range(0, m, chunk):
            s1 = min(m, s0 + chunk)
            a = seg_a[s0:s1][:, None, :]
            r = d1[s0:s1][:, None, :]
            c = seg_a[None, :, :]
            s = d1[None, :, :]
            denom = r[..., 0] * s[..., 1] - r[..., 1] * s[..., 0]
            qp = c - a
            with np.errstate(divide="ignore", invalid="ignore"):
                t = (qp[..., 0] * s[..., 1] - qp[..., 1] * s[..., 0]) / denom
                u = (qp[..., 0] * r[..., 1] - qp[..., 1] * r[..., 0]) / denom
            valid = (np.abs(denom) > 1e-15) & (t >= -1e-12) & (t <= 1 + 1e-12) \
                & (u >= -1e-12) & (u <= 1 + 1e-12)
            # each unordered pair once, different traces only
            row_idx = np.arange(s0, s1)[:, None]
            col_idx = np.arange(m)[None, :]
            valid &= col_idx > row_idx
            valid &= seg_owner[s0:s1][:, None] != seg_owner[None, :]
            ii, jj = np.nonzero(valid)
            if len(ii):
                pts = (a[ii, 0, :] + t[ii, jj][:, None] * r[ii, 0, :])
                own_i = seg_owner[s0 + ii]
                own_j = seg_owner[jj]
                x_candidates.append((pts, own_i, own_j))
    x_nodes: list[np.ndarray] = []
    if x_candidates:
        pts = np.concatenate([p for p, _, _ in x_candidates])
        own_i = np.concatenate([a for _, a, _ in x_candidates])
        own_j = np.concatenate([b for _, _, b in x_candidates])
        # drop candidates at either trace's endpoints (those are Y junctions)
        if len(ep_points):
            dd = np.sqrt(((pts[:, None, :] - ep_points[None, :, :]) ** 2).sum(axis=2))
            at_end = ((dd <= eps) & ((ep_owner[None, :] == own_i[:, None])
                                     | (ep_owner[None, :] == own_j[:, None]))).any(axis=1)
        else:
            at_end = np.zeros(len(pts), bool)
        y_points = np.asarray([n.point for n in nodes if n.kind == "Y"]) \
            if any(n.kind == "Y" for n in nodes) else np.zeros((0, 2))
        order = np.lexsort((pts[:, 1], pts[:, 0]))
        for k in order:
            if at_end[k]:
                continue
            p = pts[k]
            if any(np.linalg.norm(p - q) <= eps for q in x_nodes):
                continue
            if len(y_points) and np.min(np.linalg.norm(y_points - p, axis=1)) <= eps:
                continue
            x_nodes.append(p)
    nodes.extend(Node(point=p, kind="X") for p in x_nodes)
    return nodes


def topology_summary(nodes) -> TopologySummary:
    kinds = [n.kind for n in nodes]
    return TopologySummary(
        n_i=kinds.count("I"), n_x=kinds.count("X"), n_y=kinds.count("Y")
    )


_TERN_X = np.array([0.5, math.sqrt(3.0) / 2.0])


def ternary_coordinates(summary: TopologySummary):
    """Barycentric (p_i, p_x, p_y) -> Cartesian with I=(0,0), Y=(1,0), X=(0.5, sqrt3/2)."""
    p_i, p_x, p_y = summary.proportions
    x = p_y * 1.0 + p_x * _TERN_X[0]
    y = p_x * _TERN_X[1]
    return (x, y)


# ---------------------------------------------------------------------------
# Block statistics via jittered persistent-plane decomposition
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BlockStats:
    volumes: np.ndarray               # sorted cell volumes, m^3
    palmstrom_shares: dict            # class -> % of blocks
    singh_shares: dict                # class -> % of blocks
    method: str = BLOCK_STATS_METHOD

    def volume_cdf(self):
        """Sorted (volume, cumulative %) pairs."""
        n = len(self.volumes)
        return [(float(v), 100.0 * (i + 1) / n) for i, v in enumerate(self.volumes)]


def block_statistics(sets, region_size, jitter: float = 0.0, seed: int = 0,
                     thresholds: ClassThresholds | None = None) -> BlockStats:
    """Slice a region by three plane families and measure the lattice cells.

    ``sets`` is a list of three (Orientation, spacing) pairs; ``region_size``
    the box edge lengths.  Spacings are drawn per slab as spacing*(1 +- jitter).
    Cells are counted by lattice (not clipped to the region boundary).
    """
    if len(sets) != 3:
        raise ValidationError("exactly three plane families required")
    if not (0.0 <= jitter < 1.0):
        raise ValidationError("jitter must be in [0, 1)")
    region_size = np.asarray(region_size, dtype=np.float64)
    if region_size.shape != (3,) or (region_size <= 0).any():
        raise ValidationError("region_size must be three positive lengths")
    normals = np.stack([orientation_to_normal(o) for o, _ in sets])
    det = float(np.linalg.det(normals))
    if abs(det) < 1e-9:
        raise ValidationError("plane family normals are coplanar")
    spacings = [s for _, s in sets]
    if min(spacings) <= 0.0:
        raise ValidationError("spacings must be positive")

    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xB10C]))
    corners = np.array(
        [[x, y, z] for x in (0, region_size[0]) for y in (0, region_size[1]) for z in (0, region_size[2])]
    )
    thicknesses = []
    for f in range(3):
        proj = corners @ normals[f]
        extent = proj.max() - proj.min()
        ts = []
        covered = 0.0
        while covered < extent:
            t = spacings[f] * (1.0 + rng.uniform(-jitter, jitter)) if jitter > 0 else spacings[f]
            ts.append(t)
            covered += t
        thicknesses.append(np.asarray(ts))

    inv = np.linalg.inv(normals)
    edge_units = np.linalg.norm(inv, axis=0)  # |column_k| of N^-1

    d1, d2, d3 = thicknesses
    vols = []
    ratios = []
    for t1 in d1:
        for t2 in d2:
            for t3 in d3:
                vols.append(t1 * t2 * t3 / abs(det))
                edges = np.sort(np.array([t1, t2, t3]) * edge_units)
                ratios.append((edges[1] / edges[0], edges[2] / edges[1]))
    vols = np.sort(np.asarray(vols))

    th = thresholds or ClassThresholds()
    palm: dict = {}
    singh: dict = {}
    for f, e in ratios:
        c = classify_ratios(f, e, th)
        palm[c.palmstrom] = palm.get(c.palmstrom, 0) + 1
        singh[c.singh] = singh.get(c.singh, 0) + 1
    n = len(ratios)
    palm = {k: 100.0 * v / n for k, v in sorted(palm.items())}
    singh = {k: 100.0 * v / n for k, v in sorted(singh.items())}
    return BlockStats(volumes=vols, palmstrom_shares=palm, singh_shares=singh)


# ---------------------------------------------------------------------------
# CSV / SVG emission
# ---------------------------------------------------------------------------

def save_topology_csv(rows, path) -> None:
    """rows: list of (label, TopologySummary)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["label", "n_i", "n_x", "n_y", "n_lines", "c_l", "ternary_x", "ternary_y"])
        for label, s in rows:
            tx, ty = ternary_coordinates(s)
            w.writerow([label, s.n_i, s.n_x, s.n_y,
                        f"{s.n_lines:.6g}", f"{s.c_l:.6g}", f"{tx:.6f}", f"{ty:.6f}"])


def save_block_stats_csv(stats: BlockStats, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", stats.method])
        w.writerow(["volume_m3", "cumulative_percent"])
        for v, c in stats.volume_cdf():
            w.writerow([f"{v:.9g}", f"{c:.6f}"])
        w.writerow([])
        w.writerow(["scheme", "class", "share_percent"])
        for k, v in stats.palmstrom_shares.items():
            w.writerow(["palmstrom", k, f"{v:.6f}"])
        for k, v in stats.singh_shares.items():
            w.writerow(["singh", k, f"{v:.6f}"])


def save_ternary_svg(summaries, path) -> None:
    from .svgplot import ternary_svg

    pts = [ternary_coordinates(s) for s in summaries]
    ternary_svg(pts, path)


def save_volume_cdf_svg(stats: BlockStats, path) -> None:
    from .svgplot import step_curve_svg

    cdf = stats.volume_cdf()
    xs = [v for v, _ in cdf]
    ys = [c for _, c in cdf]
    step_curve_svg(xs, ys, path, labels=("block volume (m^3)", "cumulative %"), logx=True)
