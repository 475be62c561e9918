from .cameras import CameraSpec, sample_camera_poses
from .raycast import Bvh
from .render import (
    BACKGROUND,
    JOINT,
    ImagePair,
    RenderConfig,
    load_mask,
    load_rgb,
    render_pair,
    save_image_pair,
)
from .textures import TextureSpec, eval_texture, texture_suite

__all__ = [
    "BACKGROUND",
    "Bvh",
    "CameraSpec",
    "ImagePair",
    "JOINT",
    "RenderConfig",
    "TextureSpec",
    "eval_texture",
    "load_mask",
    "load_rgb",
    "render_pair",
    "sample_camera_poses",
    "save_image_pair",
    "texture_suite",
]
