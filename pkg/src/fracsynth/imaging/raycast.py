"""Array-based BVH and numba ray/distance kernels for the renderer.

The BVH is built once per mesh with numpy (median split on the longest
centroid axis) and traversed in nopython kernels.  All kernels are pure
per-element loops with no shared mutable state, so results are identical
regardless of threading or scheduling.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange

_LEAF_SIZE = 4


class Bvh:
    __slots__ = ("node_min", "node_max", "node_left", "node_right",
                 "node_start", "node_count", "tri_order", "v0", "e1", "e2")

    def __init__(self, vertices: np.ndarray, triangles: np.ndarray):
        a = vertices[triangles[:, 0]]
        b = vertices[triangles[:, 1]]
        c = vertices[triangles[:, 2]]
        self.v0 = np.ascontiguousarray(a)
        self.e1 = np.ascontiguousarray(b - a)
        self.e2 = np.ascontiguousarray(c - a)
        tmin = np.minimum(np.minimum(a, b), c)
        tmax = np.maximum(np.maximum(a, b), c)
        centroids = (a + b + c) / 3.0

        m = len(triangles)
        order = np.arange(m)
        node_min, node_max = [], []
        node_left, node_right = [], []
        node_start, node_count = [], []

        # (start, count, node_index) work stack; children appended on split
        stack = [(0, m, 0)]
        node_min.append(np.zeros(3))
        node_max.append(np.zeros(3))
        node_left.append(-1)
        node_right.append(-1)
        node_start.append(0)
        node_count.append(0)
        while stack:
            start, count, ni = stack.pop()
            idx = order[start:start + count]
            bmin = tmin[idx].min(axis=0)
            bmax = tmax[idx].max(axis=0)
            node_min[ni] = bmin
            node_max[ni] = bmax
            if count <= _LEAF_SIZE:
                node_left[ni] = -1
                node_right[ni] = -1
                node_start[ni] = start
                node_count[ni] = count
                continue
            cen = centroids[idx]
            axis = int(np.argmax(cen.max(axis=0) - cen.min(axis=0)))
            local = np.argsort(cen[:, axis], kind="stable")
            order[start:start + count] = idx[local]
            half = count // 2
            li = len(node_min)
            for _ in range(2):
                node_min.append(np.zeros(3))
                node_max.append(np.zeros(3))
                node_left.append(-1)
                node_right.append(-1)
                node_start.append(0)
                node_count.append(0)
            node_left[ni] = li
            node_right[ni] = li + 1
            stack.append((start, half, li))
            stack.append((start + half, count - half, li + 1))

        self.node_min = np.ascontiguousarray(np.asarray(node_min))
        self.node_max = np.ascontiguousarray(np.asarray(node_max))
        self.node_left = np.asarray(node_left, dtype=np.int64)
        self.node_right = np.asarray(node_right, dtype=np.int64)
        self.node_start = np.asarray(node_start, dtype=np.int64)
        self.node_count = np.asarray(node_count, dtype=np.int64)
        self.tri_order = np.ascontiguousarray(order.astype(np.int64))

    def cast(self, origins: np.ndarray, dirs: np.ndarray):
        """Nearest-hit query; returns (t, tri_index, bary_u, bary_v).

        tri_index is -1 for misses.
        """
        n = len(origins)
        out_t = np.empty(n)
        out_tri = np.empty(n, dtype=np.int64)
        out_u = np.empty(n)
        out_v = np.empty(n)
        _cast_kernel(
            np.ascontiguousarray(origins), np.ascontiguousarray(dirs),
            self.node_min, self.node_max, self.node_left, self.node_right,
            self.node_start, self.node_count, self.tri_order,
            self.v0, self.e1, self.e2, out_t, out_tri, out_u, out_v,
        )
        return out_t, out_tri, out_u, out_v


@njit(cache=True, parallel=True)
def _cast_kernel(origins, dirs, node_min, node_max, node_left, node_right,
                 node_start, node_count, tri_order, v0, e1, e2,
                 out_t, out_tri, out_u, out_v):
    for r in prange(origins.shape[0]):
        ox, oy, oz = origins[r, 0], origins[r, 1], origins[r, 2]
        dx, dy, dz = dirs[r, 0], dirs[r, 1], dirs[r, 2]
        inv_x = 1.0 / dx if dx != 0.0 else 1e300
        inv_y = 1.0 / dy if dy != 0.0 else 1e300
        inv_z = 1.0 / dz if dz != 0.0 else 1e300
        best_t = 1e300
        best_tri = -1
        best_u = 0.0
        best_v = 0.0
        stack = np.empty(128, dtype=np.int64)
        sp = 0
        stack[sp] = 0
        sp += 1
        while sp > 0:
            sp -= 1
            ni = stack[sp]
            # slab test
            t1 = (node_min[ni, 0] - ox) * inv_x
            t2 = (node_max[ni, 0] - ox) * inv_x
            tmin = min(t1, t2)
            tmax = max(t1, t2)
            t1 = (node_min[ni, 1] - oy) * inv_y
            t2 = (node_max[ni, 1] - oy) * inv_y
            tmin = max(tmin, min(t1, t2))
            tmax = min(tmax, max(t1, t2))
            t1 = (node_min[ni, 2] - oz) * inv_z
            t2 = (node_max[ni, 2] - oz) * inv_z
            tmin = max(tmin, min(t1, t2))
            tmax = min(tmax, max(t1, t2))
            if tmax < max(tmin, 0.0) or tmin > best_t:
                continue
            if node_left[ni] < 0:
                for k in range(node_start[ni], node_start[ni] + node_count[ni]):
                    ti = tri_order[k]
                    # Moller-Trumbore
                    px = dy * e2[ti, 2] - dz * e2[ti, 1]
                    py = dz * e2[ti, 0] - dx * e2[ti, 2]
                    pz = dx * e2[ti, 1] - dy * e2[ti, 0]
                    det = e1[ti, 0] * px + e1[ti, 1] * py + e1[ti, 2] * pz
                    if -1e-14 < det < 1e-14:
                        continue
                    inv_det = 1.0 / det
                    tx = ox - v0[ti, 0]
                    ty = oy - v0[ti, 1]
                    tz = oz - v0[ti, 2]
                    u = (tx * px + ty * py + tz * pz) * inv_det
                    if u < -1e-9 or u > 1.0 + 1e-9:
                        continue
                    qx = ty * e1[ti, 2] - tz * e1[ti, 1]
                    qy = tz * e1[ti, 0] - tx * e1[ti, 2]
                    qz = tx * e1[ti, 1] - ty * e1[ti, 0]
                    v = (dx * qx + dy * qy + dz * qz) * inv_det
                    if v < -1e-9 or u + v > 1.0 + 1e-9:
                        continue
                    t = (e2[ti, 0] * qx + e2[ti, 1] * qy + e2[ti, 2] * qz) * inv_det
                    if 1e-9 < t < best_t:
                        best_t = t
                        best_tri = ti
                        best_u = u
                        best_v = v
            else:
                stack[sp] = node_left[ni]
                sp += 1
                stack[sp] = node_right[ni]
                sp += 1
        out_t[r] = best_t
        out_tri[r] = best_tri
        out_u[r] = best_u
        out_v[r] = best_v


@njit(cache=True, parallel=True)
def _near_kernel(points, seg_a, seg_d, seg_len2, seg_r2,
                 seg_bbmin, seg_bbmax,
                 grid_lo, inv_cell, nx, ny, nz, cell_start, cell_items, out):
    """out[i] = True when point i lies within the capsule of any segment.

    Segments are pre-binned into a uniform grid of their (radius-inflated)
    bounding boxes; a point only tests the segments registered in its cell.
    """
    n = points.shape[0]
    for i in prange(n):
        px, py, pz = points[i, 0], points[i, 1], points[i, 2]
        cx = int((px - grid_lo[0]) * inv_cell)
        cy = int((py - grid_lo[1]) * inv_cell)
        cz = int((pz - grid_lo[2]) * inv_cell)
        hit = False
        if 0 <= cx < nx and 0 <= cy < ny and 0 <= cz < nz:
            cell = (cx * ny + cy) * nz + cz
            for k in range(cell_start[cell], cell_start[cell + 1]):
                s = cell_items[k]
                if (px < seg_bbmin[s, 0] or px > seg_bbmax[s, 0]
                        or py < seg_bbmin[s, 1] or py > seg_bbmax[s, 1]
                        or pz < seg_bbmin[s, 2] or pz > seg_bbmax[s, 2]):
                    continue
                ax = px - seg_a[s, 0]
                ay = py - seg_a[s, 1]
                az = pz - seg_a[s, 2]
                dot = ax * seg_d[s, 0] + ay * seg_d[s, 1] + az * seg_d[s, 2]
                t = dot / seg_len2[s]
                if t < 0.0:
                    t = 0.0
                elif t > 1.0:
                    t = 1.0
                qx = ax - t * seg_d[s, 0]
                qy = ay - t * seg_d[s, 1]
                qz = az - t * seg_d[s, 2]
                if qx * qx + qy * qy + qz * qz <= seg_r2[s]:
                    hit = True
                    break
        out[i] = hit


class SegmentIndex:
    """Uniform-grid index over trace capsules for fast point membership."""

    def __init__(self, traces, cell: float = 1.0):
        (self.seg_a, self.seg_d, self.seg_len2, self.seg_r2,
         self.bbmin, self.bbmax) = segment_arrays(traces)
        self.cell = float(cell)
        m = len(self.seg_a)
        if m == 0:
            self.empty = True
            return
        self.empty = False
        self.lo = self.bbmin.min(axis=0)
        hi = self.bbmax.max(axis=0)
        dims = np.maximum(1, np.ceil((hi - self.lo) / self.cell).astype(np.int64))
        self.nx, self.ny, self.nz = (int(d) for d in dims)
        lo_cell = np.floor((self.bbmin - self.lo) / self.cell).astype(np.int64)
        hi_cell = np.minimum(
            np.floor((self.bbmax - self.lo) / self.cell).astype(np.int64),
            dims - 1,
        )
        n_cells = self.nx * self.ny * self.nz
        counts = np.zeros(n_cells + 1, dtype=np.int64)
        spans = []
        for s in range(m):
            for cx in range(lo_cell[s, 0], hi_cell[s, 0] + 1):
                for cy in range(lo_cell[s, 1], hi_cell[s, 1] + 1):
                    for cz in range(lo_cell[s, 2], hi_cell[s, 2] + 1):
                        cell_id = (cx * self.ny + cy) * self.nz + cz
                        counts[cell_id + 1] += 1
                        spans.append((cell_id, s))
        self.cell_start = np.cumsum(counts)
        items = np.empty(len(spans), dtype=np.int64)
        cursor = self.cell_start[:-1].copy()
        for cell_id, s in spans:
            items[cursor[cell_id]] = s
            cursor[cell_id] += 1
        self.cell_items = items

    def query(self, points: np.ndarray) -> np.ndarray:
        out = np.zeros(len(points), dtype=np.bool_)
        if self.empty or not len(points):
            return out
        _near_kernel(np.ascontiguousarray(points), self.seg_a, self.seg_d,
                     self.seg_len2, self.seg_r2, self.bbmin, self.bbmax,
                     self.lo, 1.0 / self.cell, self.nx, self.ny, self.nz,
                     self.cell_start, self.cell_items, out)
        return out


def points_near_segments(points, seg_a, seg_d, seg_len2, seg_r2,
                         seg_bbmin, seg_bbmax, out):
    """Brute-force fallback kept for small segment sets and tests."""
    _near_brute(points, seg_a, seg_d, seg_len2, seg_r2, seg_bbmin, seg_bbmax, out)


@njit(cache=True, parallel=True)
def _near_brute(points, seg_a, seg_d, seg_len2, seg_r2, seg_bbmin, seg_bbmax, out):
    n = points.shape[0]
    m = seg_a.shape[0]
    for i in prange(n):
        px, py, pz = points[i, 0], points[i, 1], points[i, 2]
        hit = False
        for s in range(m):
            if (px < seg_bbmin[s, 0] or px > seg_bbmax[s, 0]
                    or py < seg_bbmin[s, 1] or py > seg_bbmax[s, 1]
                    or pz < seg_bbmin[s, 2] or pz > seg_bbmax[s, 2]):
                continue
            ax = px - seg_a[s, 0]
            ay = py - seg_a[s, 1]
            az = pz - seg_a[s, 2]
            dot = ax * seg_d[s, 0] + ay * seg_d[s, 1] + az * seg_d[s, 2]
            t = dot / seg_len2[s]
            if t < 0.0:
                t = 0.0
            elif t > 1.0:
                t = 1.0
            qx = ax - t * seg_d[s, 0]
            qy = ay - t * seg_d[s, 1]
            qz = az - t * seg_d[s, 2]
            if qx * qx + qy * qy + qz * qz <= seg_r2[s]:
                hit = True
                break
        out[i] = hit


def segment_arrays(traces):
    """Flatten trace polylines into capsule arrays for the distance kernel."""
    a_list, d_list, r_list = [], [], []
    for t in traces:
        if t.thickness <= 0.0:
            continue
        p = t.polyline
        r = t.thickness / 2.0
        for i in range(len(p) - 1):
            d = p[i + 1] - p[i]
            if np.dot(d, d) <= 0.0:
                continue
            a_list.append(p[i])
            d_list.append(d)
            r_list.append(r)
    if not a_list:
        z = np.zeros((0, 3))
        return z, z.copy(), np.zeros(0), np.zeros(0), z.copy(), z.copy()
    seg_a = np.asarray(a_list)
    seg_d = np.asarray(d_list)
    radii = np.asarray(r_list)
    seg_len2 = np.einsum("ij,ij->i", seg_d, seg_d)
    seg_b = seg_a + seg_d
    bbmin = np.minimum(seg_a, seg_b) - radii[:, None]
    bbmax = np.maximum(seg_a, seg_b) + radii[:, None]
    return (np.ascontiguousarray(seg_a), np.ascontiguousarray(seg_d),
            seg_len2, radii ** 2,
            np.ascontiguousarray(bbmin), np.ascontiguousarray(bbmax))
