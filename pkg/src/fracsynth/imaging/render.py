"""Ray-cast rendering of paired RGB images and binary joint masks.

One hit predicate drives both outputs: a surface point is a joint pixel iff
its distance to any trace polyline is at most that trace's half-thickness.
The mask comes from the pixel-center sample (no anti-aliasing, strictly
binary) and the RGB applies the joint darkening at exactly the mask's pixels,
so image and label can never disagree.  Shading is flat Lambert under one
fixed directional light; rays that miss the scene are white background.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from ..errors import ValidationError
from ..geometry import TriMesh
from .cameras import CameraSpec
from .raycast import Bvh, SegmentIndex
from .textures import TextureSpec, eval_texture

JOINT = 0
BACKGROUND = 255


@dataclass(frozen=True)
class RenderConfig:
    width: int = 800
    height: int = 800
    supersample: int = 2           # RGB only; the mask is center-sampled
    ambient: float = 0.30
    diffuse: float = 0.70
    light_dir: tuple = (0.55, 0.25, 0.80)
    darken: float = 0.2            # joint pixels keep this fraction of their value

    def __post_init__(self):
        if self.width < 1 or self.height < 1 or self.supersample < 1:
            raise ValidationError("invalid render dimensions")
        if not (0.0 <= self.darken <= 1.0):
            raise ValidationError("darken must be in [0, 1]")


@dataclass(frozen=True)
class ImagePair:
    rgb: np.ndarray          # (H, W, 3) uint8
    mask: np.ndarray         # (H, W) uint8, values in {0, 255}
    camera: CameraSpec
    dfn_id: str = ""
    texture_id: int = -1
    pose_id: int = -1

    def validate(self) -> None:
        if self.rgb.shape[:2] != self.mask.shape:
            raise ValidationError("rgb and mask dimensions differ")
        if self.rgb.dtype != np.uint8 or self.mask.dtype != np.uint8:
            raise ValidationError("images must be 8-bit")
        values = np.unique(self.mask)
        if not np.all(np.isin(values, (JOINT, BACKGROUND))):
            raise ValidationError(f"mask is not binary: values {values}")

    @property
    def stem(self) -> str:
        return f"{self.dfn_id}_{self.texture_id}_{self.pose_id}"


def _pixel_rays(camera: CameraSpec, width, height, offsets):
    """Ray directions through pixel centers offset by the given subpixel shifts.

    Directions are unnormalised (hit points and facing tests are scale
    invariant, so the per-ray normalisation would be wasted work).
    """
    fwd, right, up = camera.basis()
    half = np.tan(np.radians(camera.fov) / 2.0)
    aspect = width / height
    dirs = []
    for ox, oy in offsets:
        px = (np.arange(width) + ox) / width * 2.0 - 1.0
        py = 1.0 - (np.arange(height) + oy) / height * 2.0
        gx, gy = np.meshgrid(px * half * aspect, py * half)
        d = (fwd[None, None, :]
             + gx[..., None] * right[None, None, :]
             + gy[..., None] * up[None, None, :])
        dirs.append(d.reshape(-1, 3))
    return dirs


def _shade(mesh: TriMesh, bvh: Bvh, texture: TextureSpec, camera: CameraSpec,
           dirs: np.ndarray, config: RenderConfig):
    """Per-ray shaded color (misses are white) and hit bookkeeping."""
    n = len(dirs)
    origins = np.broadcast_to(camera.position, (n, 3))
    t, tri, u, v = bvh.cast(origins, dirs)
    hit = tri >= 0
    colors = np.ones((n, 3))
    if not hit.any():
        return colors, hit, np.zeros((0, 3))
    ht = tri[hit]
    hu = u[hit][:, None]
    hv = v[hit][:, None]
    points = camera.position + dirs[hit] * t[hit][:, None]

    tris = mesh.triangles[ht]
    if mesh.uv is not None:
        uv = (mesh.uv[tris[:, 0]] * (1.0 - hu - hv)
              + mesh.uv[tris[:, 1]] * hu + mesh.uv[tris[:, 2]] * hv)
    else:
        uv = points[:, :2]
    base = eval_texture(texture, uv)

    normals = mesh.triangle_normals()[ht]
    facing = np.einsum("ij,ij->i", normals, dirs[hit])
    normals = np.where(facing[:, None] > 0.0, -normals, normals)
    light = np.asarray(config.light_dir, dtype=np.float64)
    light = light / np.linalg.norm(light)
    lam = np.clip(normals @ light, 0.0, None)
    shade = config.ambient + config.diffuse * lam
    colors[hit] = base * shade[:, None]
    return colors, hit, points


def render_pair(mesh: TriMesh, traces, texture: TextureSpec, camera: CameraSpec,
                config: RenderConfig | None = None, bvh: Bvh | None = None,
                dfn_id: str = "", pose_id: int = -1,
                return_base: bool = False):
    """Render one RGB/mask pair from the same hit predicate.

    With ``return_base`` the pre-darkening RGB (float, [0,1]) is returned as a
    third element so tests can verify the joint darkening independently.
    """
    config = config or RenderConfig()
    bvh = bvh or Bvh(mesh.vertices, mesh.triangles)
    w, h, ss = config.width, config.height, config.supersample

    # supersampled shading for the RGB base
    offsets = [((i + 0.5) / ss, (j + 0.5) / ss) for j in range(ss) for i in range(ss)]
    rgb = np.zeros((h * w, 3))
    for dirs in _pixel_rays(camera, w, h, offsets):
        colors, _, _ = _shade(mesh, bvh, texture, camera, dirs, config)
        rgb += colors
    rgb /= ss * ss

    # center-sampled joint predicate for the mask (cast only, no shading)
    (center_dirs,) = _pixel_rays(camera, w, h, [(0.5, 0.5)])
    n = len(center_dirs)
    t, tri, _, _ = bvh.cast(np.broadcast_to(camera.position, (n, 3)), center_dirs)
    hit_center = tri >= 0
    points = camera.position + center_dirs[hit_center] * t[hit_center][:, None]
    joint = np.zeros(h * w, dtype=bool)
    index = SegmentIndex(traces)
    if not index.empty and hit_center.any():
        near = index.query(points)
        joint[np.nonzero(hit_center)[0][near]] = True

    mask = np.where(joint, JOINT, BACKGROUND).astype(np.uint8).reshape(h, w)
    base = rgb.reshape(h, w, 3)
    final = base.copy()
    final[mask == JOINT] *= config.darken
    rgb8 = np.round(np.clip(final, 0.0, 1.0) * 255.0).astype(np.uint8)

    pair = ImagePair(rgb=rgb8, mask=mask, camera=camera, dfn_id=dfn_id,
                     texture_id=texture.texture_id, pose_id=pose_id)
    pair.validate()
    if return_base:
        return pair, base
    return pair


def save_image_pair(pair: ImagePair, out_dir, stem: str | None = None) -> tuple:
    """Write `{stem}.png` (RGB) and `{stem}_mask.png` (8-bit grayscale)."""
    stem = stem or pair.stem
    rgb_path = f"{out_dir}/{stem}.png"
    mask_path = f"{out_dir}/{stem}_mask.png"
    Image.fromarray(pair.rgb, mode="RGB").save(rgb_path)
    Image.fromarray(pair.mask, mode="L").save(mask_path)
    return rgb_path, mask_path


def load_mask(path) -> np.ndarray:
    return np.asarray(Image.open(path).convert("L"), dtype=np.uint8)


def load_rgb(path) -> np.ndarray:
    return np.asarray(Image.open(path).convert("RGB"), dtype=np.uint8)
