"""Parametric parallelepiped sampling and block-shape classification.

A candidate rock block is a parallelepiped with sorted edge lengths
a1 <= a2 <= a3 and inter-edge angles in (30, 150) degrees.  Shape is
summarised by flatness f = a2/a1 and elongation e = a3/a2 and classified
under two schemes: a coarse four-class scheme (boundaries at ratio 2 by
default) and a finer configurable 2D grid (boundaries at {1.5, 3} by
default).  Ties on a boundary go to the lower-ratio class.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .geometry import Orientation, normal_to_orientation

PALMSTROM_CLASSES = ("Equidimensional", "Flat", "Long", "LongFlat")

#: Default fine-grid class names indexed [e_bin][f_bin] (bins: low, mid, high).
SINGH_GRID_DEFAULT = (
    ("Cubic", "PlatyCubic", "Platy"),
    ("CubicElongated", "Bladed", "PlatyElongated"),
    ("Elongated", "ElongatedPlaty", "Bladed"),
)


@dataclass(frozen=True)
class Parallelepiped:
    """Candidate rock block: sorted edge lengths (m) + inter-edge angles (deg)."""

    a1: float
    a2: float
    a3: float
    alpha12: float = 90.0
    alpha13: float = 90.0
    alpha23: float = 90.0

    def __post_init__(self):
        if not (0.0 < self.a1 <= self.a2 <= self.a3):
            raise ValidationError(f"edge lengths must satisfy 0 < a1 <= a2 <= a3, got {(self.a1, self.a2, self.a3)}")
        for name in ("alpha12", "alpha13", "alpha23"):
            a = getattr(self, name)
            if not (30.0 < a < 150.0):
                raise ValidationError(f"{name} must be in (30, 150) degrees, got {a}")
        if self.gram_det() <= 1e-12:
            raise ValidationError("angle combination yields a degenerate (zero-volume) cell")

    def gram_det(self) -> float:
        c12 = math.cos(math.radians(self.alpha12))
        c13 = math.cos(math.radians(self.alpha13))
        c23 = math.cos(math.radians(self.alpha23))
        return 1.0 - c12 * c12 - c13 * c13 - c23 * c23 + 2.0 * c12 * c13 * c23

    def edge_vectors(self) -> np.ndarray:
        """Rows are the three edge vectors in a canonical frame."""
        c12 = math.cos(math.radians(self.alpha12))
        s12 = math.sin(math.radians(self.alpha12))
        c13 = math.cos(math.radians(self.alpha13))
        c23 = math.cos(math.radians(self.alpha23))
        e1 = np.array([1.0, 0.0, 0.0])
        e2 = np.array([c12, s12, 0.0])
        cx = c13
        cy = (c23 - c12 * c13) / s12
        cz2 = 1.0 - cx * cx - cy * cy
        if cz2 <= 0.0:
            raise ValidationError("angle combination yields a degenerate cell")
        e3 = np.array([cx, cy, math.sqrt(cz2)])
        return np.stack([self.a1 * e1, self.a2 * e2, self.a3 * e3])

    def volume(self) -> float:
        e = self.edge_vectors()
        return float(abs(np.dot(e[0], np.cross(e[1], e[2]))))

    @property
    def flatness(self) -> float:
        return self.a2 / self.a1

    @property
    def elongation(self) -> float:
        return self.a3 / self.a2


@dataclass(frozen=True)
class BlockShapeParams:
    flatness: float
    elongation: float

    def __post_init__(self):
        if self.flatness < 1.0 or self.elongation < 1.0:
            raise ValidationError("flatness and elongation must be >= 1")


@dataclass(frozen=True)
class ClassThresholds:
    """Configurable class boundaries for both schemes."""

    palmstrom_boundary: float = 2.0
    singh_bounds: tuple = (1.5, 3.0)
    singh_grid: tuple = SINGH_GRID_DEFAULT

    def __post_init__(self):
        lo, hi = self.singh_bounds
        if not (1.0 < lo < hi):
            raise ValidationError("singh_bounds must satisfy 1 < lo < hi")
        if len(self.singh_grid) != 3 or any(len(row) != 3 for row in self.singh_grid):
            raise ValidationError("singh_grid must be 3x3")


@dataclass(frozen=True)
class BlockShapeClass:
    palmstrom: str
    singh: str


def _bin(ratio: float, bounds) -> int:
    # tie on a boundary goes to the lower bin
    idx = 0
    for b in bounds:
        if ratio > b:
            idx += 1
    return idx


def classify_ratios(f: float, e: float, thresholds: ClassThresholds | None = None) -> BlockShapeClass:
    """Classify from (flatness, elongation) ratios alone."""
    th = thresholds or ClassThresholds()
    flat = f > th.palmstrom_boundary
    long_ = e > th.palmstrom_boundary
    if flat and long_:
        palm = "LongFlat"
    elif flat:
        palm = "Flat"
    elif long_:
        palm = "Long"
    else:
        palm = "Equidimensional"
    singh = th.singh_grid[_bin(e, th.singh_bounds)][_bin(f, th.singh_bounds)]
    return BlockShapeClass(palmstrom=palm, singh=singh)


def classify(p: Parallelepiped, thresholds: ClassThresholds | None = None) -> BlockShapeClass:
    return classify_ratios(p.flatness, p.elongation, thresholds)


@dataclass(frozen=True)
class ParameterRanges:
    """Sampling intervals for the parametric study."""

    edge: tuple = (1.0, 6.0)
    alpha12: tuple = (60.0, 120.0)
    alpha13: tuple = (60.0, 120.0)
    alpha23: tuple = (60.0, 120.0)

    def intervals(self):
        return [self.edge, self.edge, self.edge, self.alpha12, self.alpha13, self.alpha23]

    def validate(self):
        for lo, hi in self.intervals():
            if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
                raise ValidationError(f"invalid interval ({lo}, {hi})")
        if self.edge[0] <= 0.0:
            raise ValidationError("edge lengths must be positive")
        for nm in ("alpha12", "alpha13", "alpha23"):
            lo, hi = getattr(self, nm)
            if lo <= 30.0 or hi >= 150.0:
                raise ValidationError(f"{nm} range must lie inside (30, 150)")


def sample_parallelepipeds(n: int, ranges: ParameterRanges | None = None, seed=0) -> list:
    """Stratified (Latin-hypercube, jittered) sample of n parallelepipeds.

    Each of the six parameters is stratified into n jittered bins that are
    independently permuted, giving systematic coverage of the parameter box.
    Edge lengths are sorted per block; angle combinations with a degenerate
    Gram determinant are re-drawn uniformly.
    """
    if n < 1:
        raise ValidationError("n must be >= 1")
    ranges = ranges or ParameterRanges()
    ranges.validate()
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x51A7]))
    cols = []
    for lo, hi in ranges.intervals():
        strata = (rng.permutation(n) + rng.random(n)) / n
        cols.append(lo + strata * (hi - lo))
    params = np.stack(cols, axis=1)
    blocks = []
    for row in params:
        edges = np.sort(row[:3])
        angles = row[3:]
        for _ in range(1000):
            try:
                blocks.append(Parallelepiped(edges[0], edges[1], edges[2], angles[0], angles[1], angles[2]))
                break
            except ValidationError:
                angles = np.array(
                    [rng.uniform(lo, hi) for lo, hi in ranges.intervals()[3:]]
                )
        else:  # pragma: no cover
            raise ValidationError("could not draw a non-degenerate angle combination")
    return blocks


def select_representatives(pop: list, k: int, thresholds: ClassThresholds | None = None) -> list:
    """Pick k blocks covering every occupied class, then spreading in shape space.

    First a greedy cover guarantees one block per nonempty class of either
    scheme (while k permits); remaining picks maximise the minimum pairwise
    distance in (log f, log e).  Deterministic, ties broken by index.
    """
    if k > len(pop):
        raise ValidationError(f"k={k} exceeds population size {len(pop)}")
    th = thresholds or ClassThresholds()
    classes = [classify(p, th) for p in pop]
    coords = np.array([[math.log(p.flatness), math.log(p.elongation)] for p in pop])

    labels = [("P:" + c.palmstrom, "S:" + c.singh) for c in classes]
    uncovered = set(l for pair in labels for l in pair)
    chosen: list[int] = []
    chosen_set = set()
    while uncovered and len(chosen) < k:
        best = None
        for i in range(len(pop)):
            if i in chosen_set:
                continue
            gain = sum(1 for l in labels[i] if l in uncovered)
            if gain and (best is None or gain > best[0]):
                best = (gain, i)
        if best is None:
            break
        _, i = best
        chosen.append(i)
        chosen_set.add(i)
        uncovered -= set(labels[i])

    if len(chosen) < k:
        if not chosen:
            chosen.append(0)
            chosen_set.add(0)
        # farthest-point sampling in (log f, log e); argmax takes the lowest
        # index on ties
        dmin = np.full(len(pop), np.inf)
        for i in chosen:
            dmin = np.minimum(dmin, np.linalg.norm(coords - coords[i], axis=1))
        dmin[list(chosen_set)] = -1.0
        while len(chosen) < k:
            i = int(np.argmax(dmin))
            chosen.append(i)
            chosen_set.add(i)
            dmin = np.minimum(dmin, np.linalg.norm(coords - coords[i], axis=1))
            dmin[i] = -1.0

    return [pop[i] for i in chosen]


def joint_sets_from_block(p: Parallelepiped) -> list:
    """Three (Orientation, spacing) pairs from the block's face-pair geometry.

    Face pair j is spanned by the two edges other than edge j; its normal is
    their cross product, and the spacing is the perpendicular distance between
    the opposite faces, V / |e_k x e_l|.
    """
    e = p.edge_vectors()
    vol = abs(float(np.dot(e[0], np.cross(e[1], e[2]))))
    out = []
    for j in range(3):
        k, l = [i for i in range(3) if i != j]
        n = np.cross(e[k], e[l])
        area = np.linalg.norm(n)
        spacing = vol / area
        out.append((normal_to_orientation(n), float(spacing)))
    return out


def export_population_csv(pop: list, path, thresholds: ClassThresholds | None = None) -> None:
    th = thresholds or ClassThresholds()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["a1", "a2", "a3", "alpha12", "alpha13", "alpha23",
                    "flatness", "elongation", "palmstrom", "singh"])
        for p in pop:
            c = classify(p, th)
            w.writerow([f"{p.a1:.9g}", f"{p.a2:.9g}", f"{p.a3:.9g}",
                        f"{p.alpha12:.9g}", f"{p.alpha13:.9g}", f"{p.alpha23:.9g}",
                        f"{p.flatness:.9g}", f"{p.elongation:.9g}", c.palmstrom, c.singh])


def export_selection_jsonl(pop: list, selection: list, path) -> None:
    index = {id(b): i for i, b in enumerate(pop)}
    with open(path, "w") as fh:
        for b in selection:
            rec = {
                "block_id": index.get(id(b), -1),
                "a": [b.a1, b.a2, b.a3],
                "angles": [b.alpha12, b.alpha13, b.alpha23],
            }
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def load_selection_jsonl(path) -> list:
    blocks = []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            a = rec["a"]
            ang = rec["angles"]
            blocks.append(Parallelepiped(a[0], a[1], a[2], ang[0], ang[1], ang[2]))
    return blocks
