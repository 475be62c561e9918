"""Photogrammetry-style camera pose sampling.

Targets are spread over the surface in proportion to triangle area; each
camera sits along the local surface normal at a randomised distance, like a
survey photographing an outcrop.  Poses that would see the back of the
surface (or sink below the ground plane) are discarded and resampled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import GenerationError, ValidationError
from ..geometry import TriMesh
from .raycast import Bvh

_STREAM_POSES = 0x60


@dataclass(frozen=True)
class CameraSpec:
    target: np.ndarray
    position: np.ndarray
    fov: float = 50.0          # vertical field of view, degrees
    up: tuple = (0.0, 0.0, 1.0)

    def __post_init__(self):
        t = np.asarray(self.target, dtype=np.float64)
        p = np.asarray(self.position, dtype=np.float64)
        object.__setattr__(self, "target", t)
        object.__setattr__(self, "position", p)
        if np.linalg.norm(t - p) < 1e-12:
            raise ValidationError("camera position must differ from target")
        if not (10.0 < self.fov < 120.0):
            raise ValidationError("fov must be in (10, 120) degrees")

    def basis(self):
        fwd = self.target - self.position
        fwd = fwd / np.linalg.norm(fwd)
        up = np.asarray(self.up, dtype=np.float64)
        right = np.cross(fwd, up)
        nr = np.linalg.norm(right)
        if nr < 1e-9:  # looking straight up/down; pick an arbitrary right
            right = np.cross(fwd, np.array([1.0, 0.0, 0.0]))
            nr = np.linalg.norm(right)
        right /= nr
        true_up = np.cross(right, fwd)
        return fwd, right, true_up


def sample_camera_poses(surface: TriMesh, n_targets: int, dist_range,
                        seed: int = 0, fov: float = 50.0,
                        max_attempts: int = 100) -> list:
    """n front-facing poses, quasi-uniform over the surface area."""
    if n_targets < 1:
        raise ValidationError("n_targets must be >= 1")
    d_min, d_max = dist_range
    if not (0.0 < d_min <= d_max):
        raise ValidationError("need 0 < d_min <= d_max")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), _STREAM_POSES]))
    areas = surface.triangle_areas()
    cum = np.cumsum(areas)
    cum /= cum[-1]
    normals = surface.triangle_normals()
    a, b, c = surface.triangle_corners()
    ground_z = surface.vertices[:, 2].min()
    bvh = Bvh(surface.vertices, surface.triangles)

    poses = []
    for k in range(n_targets):
        for attempt in range(max_attempts):
            ti = int(np.searchsorted(cum, rng.random()))
            r1, r2 = rng.random(), rng.random()
            s = math.sqrt(r1)
            u, v = 1.0 - s, s * r2
            target = a[ti] + u * (b[ti] - a[ti]) + v * (c[ti] - a[ti])
            d = rng.uniform(d_min, d_max)
            position = target + normals[ti] * d
            if position[2] < ground_z:
                continue
            fwd = (target - position) / np.linalg.norm(target - position)
            t, tri, _, _ = bvh.cast(position[None, :], fwd[None, :])
            if tri[0] < 0:
                continue
            if float(np.dot(fwd, normals[tri[0]])) >= 0.0:
                continue  # backside view
            poses.append(CameraSpec(target=target, position=position, fov=fov))
            break
        else:
            raise GenerationError(
                f"target {k}: no front-facing pose found in {max_attempts} attempts"
            )
    return poses
