"""Stochastic discrete-fracture-network generation.

Three systematic joint sets (taken from a block template) plus an optional
pseudo-set of random joints.  Per set, fracture centers are uniform in the
generation region and generation runs until the accumulated fracture area
*clipped to the region* reaches the volumetric intensity target

    P32 = (fracture area in region) / (region volume),

with P32 = 1/spacing for a persistent parallel family.  Chronology-based
termination then clips younger fractures against the planes of older ones
with a configurable probability, which is what pushes the resulting trace
networks toward abutting (Y-node-rich) topologies.

Every random draw comes from a per-set stream derived from the master seed,
so networks are reproducible fracture-for-fracture.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .blockshape import Parallelepiped, joint_sets_from_block
from .errors import GenerationError, ValidationError
from .geometry import (
    Orientation,
    Plane,
    Polygon3,
    clip_polygon_halfspace,
    normal_to_orientation,
    orientation_to_normal,
)

MAX_FRACTURES_PER_SET = 1_000_000

_STREAM_SET = 0x10
_STREAM_TERMINATION = 0x20


@dataclass(frozen=True)
class SizeDist:
    """Lognormal distribution of equivalent fracture radius (metres)."""

    mu: float = math.log(8.0)
    sigma: float = 0.5

    def __post_init__(self):
        if self.sigma < 0.0:
            raise ValidationError("sigma must be >= 0")

    def sample(self, rng, n: int) -> np.ndarray:
        if self.sigma == 0.0:
            return np.full(n, math.exp(self.mu))
        return rng.lognormal(self.mu, self.sigma, n)


@dataclass(frozen=True)
class JointSet:
    mean_orientation: Orientation
    spacing: float
    p32: float
    fisher_kappa: float = 100.0
    size_dist: SizeDist = field(default_factory=SizeDist)
    chronology_rank: int = 0

    def __post_init__(self):
        if self.spacing <= 0.0:
            raise ValidationError("spacing must be > 0")
        if self.p32 <= 0.0:
            raise ValidationError("p32 must be > 0")
        if self.fisher_kappa < 0.0:
            raise ValidationError("fisher_kappa must be >= 0")


RANDOM_SET_ID = -1


@dataclass(frozen=True)
class Fracture:
    polygon: Polygon3
    set_id: int           # 0..2 for systematic sets, RANDOM_SET_ID for random joints
    rank: int             # chronology rank, lower = older
    center: np.ndarray    # generation center (always inside the region)

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=np.float64))
        if self.polygon.area() <= 0.0:
            raise ValidationError("fracture area must be > 0")


@dataclass(frozen=True)
class Region:
    """Axis-aligned generation box."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=np.float64)
        hi = np.asarray(self.hi, dtype=np.float64)
        if lo.shape != (3,) or hi.shape != (3,) or not np.all(hi > lo):
            raise ValidationError("region must be a box with hi > lo componentwise")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def volume(self) -> float:
        return float(np.prod(self.hi - self.lo))

    def sample_point(self, rng) -> np.ndarray:
        return self.lo + rng.random(3) * (self.hi - self.lo)


@dataclass(frozen=True)
class Dfn:
    region: Region
    fractures: tuple
    seed: int
    provenance: str  # hash of the generating config

    def achieved_p32(self, set_id=None) -> float:
        area = 0.0
        for f in self.fractures:
            if set_id is not None and f.set_id != set_id:
                continue
            clipped = clip_polygon_to_box(f.polygon, self.region)
            if clipped is not None:
                area += clipped.area()
        return area / self.region.volume()


def estimate_p32(spacing: float) -> float:
    """Volumetric intensity of a persistent parallel family: P32 = 1/spacing."""
    if spacing <= 0.0:
        raise ValidationError("spacing must be > 0")
    return 1.0 / spacing


def clip_polygon_to_box(poly: Polygon3, region: Region) -> Polygon3 | None:
    out = poly
    for axis in range(3):
        for sign, bound in ((1.0, region.lo[axis]), (-1.0, region.hi[axis])):
            n = np.zeros(3)
            n[axis] = sign
            p = np.zeros(3)
            p[axis] = bound
            out = clip_polygon_halfspace(out, Plane(point=p, normal=n), keep_positive=True)
            if out is None:
                return None
    return out


def _fisher_deviate(rng, kappa: float) -> float:
    """Polar angle (radians) off the mean direction for a Fisher distribution."""
    if math.isinf(kappa):
        return 0.0
    if kappa <= 1e-12:
        return math.acos(1.0 - 2.0 * rng.random())  # uniform on the sphere
    u = rng.random()
    # inverse-CDF sampling of cos(theta)
    c = 1.0 + math.log(1.0 - u * (1.0 - math.exp(-2.0 * kappa))) / kappa
    return math.acos(min(1.0, max(-1.0, c)))


def _rotate_about(axis: np.ndarray, angle: float) -> np.ndarray:
    axis = axis / np.linalg.norm(axis)
    c, s = math.cos(angle), math.sin(angle)
    x, y, z = axis
    return np.array(
        [
            [c + x * x * (1 - c), x * y * (1 - c) - z * s, x * z * (1 - c) + y * s],
            [y * x * (1 - c) + z * s, c + y * y * (1 - c), y * z * (1 - c) - x * s],
            [z * x * (1 - c) - y * s, z * y * (1 - c) + x * s, c + z * z * (1 - c)],
        ]
    )


def _dispersed_normal(rng, mean_normal: np.ndarray, kappa: float) -> np.ndarray:
    theta = _fisher_deviate(rng, kappa)
    if theta == 0.0:
        return mean_normal
    ref = np.array([0.0, 0.0, 1.0]) if abs(mean_normal[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    t1 = np.cross(mean_normal, ref)
    t1 /= np.linalg.norm(t1)
    phi = rng.random() * 2.0 * math.pi
    tilt = _rotate_about(t1, theta)
    spin = _rotate_about(mean_normal, phi)
    return spin @ (tilt @ mean_normal)


def _disc_polygon(center: np.ndarray, normal: np.ndarray, radius: float, n_sides: int) -> Polygon3:
    """Regular n-gon with the same area as the disc of the given radius."""
    ref = np.array([0.0, 0.0, 1.0]) if abs(normal[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    u = np.cross(normal, ref)
    u /= np.linalg.norm(u)
    v = np.cross(normal, u)
    circum = radius * math.sqrt(2.0 * math.pi / (n_sides * math.sin(2.0 * math.pi / n_sides)))
    ang = 2.0 * math.pi * np.arange(n_sides) / n_sides
    pts = center + circum * (np.cos(ang)[:, None] * u + np.sin(ang)[:, None] * v)
    return Polygon3(vertices=pts, plane=Plane(point=center, normal=normal))


@dataclass(frozen=True)
class DfnConfig:
    """Generation knobs; engineering defaults, recorded in the datasheet.

    The systematic-set size default makes the sets through-going at bench
    scale (the connectivity of the resulting trace networks depends on it);
    random joints are subordinate and much smaller.
    """

    fisher_kappa: float = 100.0
    size_dist: SizeDist = field(default_factory=lambda: SizeDist(mu=math.log(30.0), sigma=0.2))
    random_fraction: float = 0.1
    random_size_dist: SizeDist | None = field(default_factory=lambda: SizeDist(mu=math.log(6.0), sigma=0.4))
    termination_prob: float = 0.8
    n_gon_sides: int = 12

    def __post_init__(self):
        if not (0.0 <= self.random_fraction < 1.0):
            raise ValidationError("random_fraction must be in [0, 1)")
        if not (0.0 <= self.termination_prob <= 1.0):
            raise ValidationError("termination_prob must be in [0, 1]")
        if self.n_gon_sides < 3:
            raise ValidationError("n_gon_sides must be >= 3")

    def hash(self) -> str:
        payload = json.dumps(
            {
                "fisher_kappa": self.fisher_kappa,
                "size_mu": self.size_dist.mu,
                "size_sigma": self.size_dist.sigma,
                "random_fraction": self.random_fraction,
                "termination_prob": self.termination_prob,
                "n_gon_sides": self.n_gon_sides,
            },
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _generate_set(rng, region: Region, normal: np.ndarray, kappa: float,
                  size_dist: SizeDist, target_p32: float, set_id: int, rank: int,
                  n_sides: int, uniform_orientation: bool = False) -> list:
    target_area = target_p32 * region.volume()
    fractures = []
    accumulated = 0.0
    while accumulated < target_area:
        if len(fractures) >= MAX_FRACTURES_PER_SET:
            raise GenerationError(
                f"set {set_id}: target P32 {target_p32} unreachable within "
                f"{MAX_FRACTURES_PER_SET} fractures"
            )
        center = region.sample_point(rng)
        if uniform_orientation:
            z = 1.0 - 2.0 * rng.random()
            phi = 2.0 * math.pi * rng.random()
            r = math.sqrt(max(0.0, 1.0 - z * z))
            n = np.array([r * math.cos(phi), r * math.sin(phi), z])
        else:
            n = _dispersed_normal(rng, normal, kappa)
        radius = float(size_dist.sample(rng, 1)[0])
        poly = _disc_polygon(center, n, radius, n_sides)
        clipped = clip_polygon_to_box(poly, region)
        if clipped is None:
            continue
        accumulated += clipped.area()
        fractures.append(Fracture(polygon=poly, set_id=set_id, rank=rank, center=center))
    return fractures


def generate_dfn(sets: list, region: Region, seed: int,
                 config: DfnConfig | None = None) -> Dfn:
    """Generate one network from the given joint sets inside an axis-aligned box.

    Per-set RNG streams are decoupled, so adding or reordering sets leaves the
    other sets' fractures unchanged for a given seed.
    """
    config = config or DfnConfig()
    if region.volume() <= 0.0:
        raise ValidationError("region volume must be > 0")
    fractures = []
    for i, js in enumerate(sets):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), _STREAM_SET, i]))
        normal = orientation_to_normal(js.mean_orientation)
        fractures.extend(
            _generate_set(rng, region, normal, js.fisher_kappa, js.size_dist,
                          js.p32, i, js.chronology_rank, config.n_gon_sides)
        )
    if config.random_fraction > 0.0 and sets:
        total_sys = sum(js.p32 for js in sets)
        p32_rand = config.random_fraction / (1.0 - config.random_fraction) * total_sys
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), _STREAM_SET, 99]))
        size = config.random_size_dist or config.size_dist
        max_rank = max(js.chronology_rank for js in sets)
        fractures.extend(
            _generate_set(rng, region, np.array([0.0, 0.0, 1.0]), 0.0, size,
                          p32_rand, RANDOM_SET_ID, max_rank + 1,
                          config.n_gon_sides, uniform_orientation=True)
        )
    return Dfn(region=region, fractures=tuple(fractures), seed=int(seed),
               provenance=config.hash())


def _polygons_intersect(a: Polygon3, b: Polygon3) -> bool:
    """True when two planar polygons share a 1D intersection segment."""
    amin, amax = a.aabb()
    bmin, bmax = b.aabb()
    if (amax < bmin - 1e-12).any() or (amin > bmax + 1e-12).any():
        return False
    sd_b = a.plane.signed_distance(b.vertices)
    if (sd_b > 1e-12).all() or (sd_b < -1e-12).all():
        return False
    sd_a = b.plane.signed_distance(a.vertices)
    if (sd_a > 1e-12).all() or (sd_a < -1e-12).all():
        return False
    # chord of b crossing a's plane, then check overlap against polygon a
    pts = []
    nb = len(b.vertices)
    for i in range(nb):
        p, q = b.vertices[i], b.vertices[(i + 1) % nb]
        dp, dq = sd_b[i], sd_b[(i + 1) % nb]
        if dp * dq < 0.0:
            t = dp / (dp - dq)
            pts.append(p + t * (q - p))
        elif dp == 0.0:
            pts.append(p)
    if len(pts) < 2:
        return False
    from .geometry import _clip_segment_to_polygon  # internal reuse

    sub = _clip_segment_to_polygon(pts[0], pts[1], a, 1e-9)
    return any(np.linalg.norm(q - p) > 1e-9 for p, q in sub)


def apply_chronology_termination(dfn: Dfn, termination_prob: float, seed: int) -> Dfn:
    """Clip younger fractures at the planes of older, intersecting fractures.

    For each (younger, older) intersecting pair, with the given probability the
    younger polygon is cut at the older fracture's plane, keeping the side that
    contains its centroid.  Older fractures are never modified and the fracture
    count is unchanged; areas only shrink.
    """
    if not (0.0 <= termination_prob <= 1.0):
        raise ValidationError("termination_prob must be in [0, 1]")
    if termination_prob == 0.0 or len(dfn.fractures) < 2:
        return dfn
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), _STREAM_TERMINATION]))
    fracs = list(dfn.fractures)
    order = sorted(range(len(fracs)), key=lambda i: (fracs[i].rank, i))
    boxes = [f.polygon.aabb() for f in fracs]
    for yi_pos, yi in enumerate(order):
        young = fracs[yi]
        if young.rank == 0:
            continue
        poly = young.polygon
        for oj in order[:yi_pos]:
            old = fracs[oj]
            if old.rank >= young.rank:
                continue
            omin, omax = boxes[oj]
            pmin, pmax = poly.aabb()
            if (omax < pmin - 1e-12).any() or (omin > pmax + 1e-12).any():
                continue
            if not _polygons_intersect(old.polygon, poly):
                continue
            if rng.random() >= termination_prob:
                continue
            centroid = poly.centroid()
            side = float(old.polygon.plane.signed_distance(centroid[None, :])[0])
            keep_positive = side >= 0.0
            clipped = clip_polygon_halfspace(poly, old.polygon.plane, keep_positive)
            if clipped is not None and clipped.area() > 1e-9:
                poly = clipped
        if poly is not young.polygon:
            fracs[yi] = replace(young, polygon=poly)
    return Dfn(region=dfn.region, fractures=tuple(fracs), seed=dfn.seed,
               provenance=dfn.provenance)


def _rotation_between(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Minimal rotation mapping unit-ish vector a onto b (Rodrigues)."""
    a = a / np.linalg.norm(a)
    b = b / np.linalg.norm(b)
    v = np.cross(a, b)
    c = float(a @ b)
    s = float(np.linalg.norm(v))
    if s < 1e-12:
        return np.eye(3) if c > 0 else -np.eye(3)
    vx = np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])
    return np.eye(3) + vx + vx @ vx * ((1.0 - c) / (s * s))


def joint_sets_for_block(block: Parallelepiped, config: DfnConfig | None = None,
                         face_normal=None) -> list:
    """JointSets for a block: face normals + spacings + P32 = 1/spacing.

    With ``face_normal`` the block frame is rotated so the block's main
    diagonal aligns with it, which keeps all three sets oblique to the mapped
    face (no set degenerates into face-parallel fractures).  Chronology ranks
    follow the set index.
    """
    config = config or DfnConfig()
    rot = None
    if face_normal is not None:
        diag = block.edge_vectors().sum(axis=0)
        rot = _rotation_between(diag, np.asarray(face_normal, dtype=np.float64))
    out = []
    for rank, (orientation, spacing) in enumerate(joint_sets_from_block(block)):
        if rot is not None:
            orientation = normal_to_orientation(rot @ orientation_to_normal(orientation))
        out.append(
            JointSet(
                mean_orientation=orientation,
                spacing=spacing,
                p32=estimate_p32(spacing),
                fisher_kappa=config.fisher_kappa,
                size_dist=config.size_dist,
                chronology_rank=rank,
            )
        )
    return out


def build_dfn_suite(blocks: list, region: Region, master_seed: int,
                    config: DfnConfig | None = None, face_normal=None) -> list:
    """One terminated DFN per block, with per-DFN seeds derived from the master."""
    config = config or DfnConfig()
    suite = []
    for i, block in enumerate(blocks):
        seed = derive_seed(master_seed, i)
        sets = joint_sets_for_block(block, config, face_normal=face_normal)
        dfn = generate_dfn(sets, region, seed, config)
        dfn = apply_chronology_termination(dfn, config.termination_prob, seed)
        suite.append(dfn)
    return suite


def derive_seed(master_seed: int, index: int) -> int:
    h = hashlib.sha256(f"{master_seed}:{index}".encode()).digest()
    return int.from_bytes(h[:8], "little")


# ---------------------------------------------------------------------------
# Serialisation: one fracture per JSON line
# ---------------------------------------------------------------------------

def save_dfn_jsonl(dfn: Dfn, path) -> None:
    with open(path, "w") as fh:
        header = {
            "region_lo": dfn.region.lo.tolist(),
            "region_hi": dfn.region.hi.tolist(),
            "seed": dfn.seed,
            "provenance": dfn.provenance,
        }
        fh.write(json.dumps({"header": header}, sort_keys=True) + "\n")
        for f in dfn.fractures:
            rec = {
                "set_id": f.set_id,
                "rank": f.rank,
                "center": [round(c, 12) for c in f.center.tolist()],
                "vertices": [[round(x, 12) for x in v] for v in f.polygon.vertices.tolist()],
            }
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def load_dfn_jsonl(path) -> Dfn:
    fractures = []
    header = None
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            if "header" in rec:
                header = rec["header"]
                continue
            poly = Polygon3.from_points(np.asarray(rec["vertices"]))
            fractures.append(
                Fracture(polygon=poly, set_id=rec["set_id"], rank=rec["rank"],
                         center=np.asarray(rec["center"]))
            )
    if header is None:
        raise ValidationError(f"{path}: missing DFN header line")
    region = Region(lo=np.asarray(header["region_lo"]), hi=np.asarray(header["region_hi"]))
    return Dfn(region=region, fractures=tuple(fractures), seed=header["seed"],
               provenance=header["provenance"])
