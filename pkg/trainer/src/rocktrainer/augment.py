"""Paired image/mask augmentation.

All geometric transforms are applied with identical parameters to the image
and the mask; the mask is sampled nearest-neighbour and re-binarised so it
stays strictly {0, 255} (background/fill is white = 255).  Photometric
transforms (colour jitter, blur) touch the image only.

Pipeline and parameter ranges: random crop of 65-100% area resized to the
crop size; horizontal/vertical flips at 50% each; rotation of +-15 degrees
with white fill; random affine (+-10% translation, 0.8-1.2x scale, +-10
degree shear); random perspective (distortion 0.2) at 50%; colour jitter of
brightness +-40%, contrast +-40%, saturation +-30%, hue +-15%; Gaussian blur
with a 3x3 kernel and sigma in [0.1, 1.0].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
import torchvision.transforms.v2.functional as TF
from torchvision.transforms import InterpolationMode

WHITE = 255.0


@dataclass
class AugmentConfig:
    crop_size: int = 768
    crop_area: tuple = (0.65, 1.0)
    crop_ratio: tuple = (3.0 / 4.0, 4.0 / 3.0)
    flip_prob: float = 0.5
    rotate_deg: float = 15.0
    translate_frac: float = 0.10
    scale_range: tuple = (0.8, 1.2)
    shear_deg: float = 10.0
    perspective_scale: float = 0.2
    perspective_prob: float = 0.5
    brightness: float = 0.4
    contrast: float = 0.4
    saturation: float = 0.3
    hue: float = 0.15
    blur_sigma: tuple = (0.1, 1.0)
    photometric: bool = True


def _crop_params(rng, height, width, area_range, ratio_range):
    """Mirror of RandomResizedCrop.get_params with an explicit rng."""
    area = height * width
    log_ratio = (math.log(ratio_range[0]), math.log(ratio_range[1]))
    for _ in range(10):
        target_area = area * rng.uniform(*area_range)
        aspect = math.exp(rng.uniform(*log_ratio))
        w = int(round(math.sqrt(target_area * aspect)))
        h = int(round(math.sqrt(target_area / aspect)))
        if 0 < w <= width and 0 < h <= height:
            top = int(rng.integers(0, height - h + 1))
            left = int(rng.integers(0, width - w + 1))
            return top, left, h, w
    return 0, 0, height, width


def _perspective_points(rng, height, width, scale):
    dx = int(scale * width / 2.0)
    dy = int(scale * height / 2.0)
    tl = [int(rng.integers(0, dx + 1)), int(rng.integers(0, dy + 1))]
    tr = [width - 1 - int(rng.integers(0, dx + 1)), int(rng.integers(0, dy + 1))]
    br = [width - 1 - int(rng.integers(0, dx + 1)), height - 1 - int(rng.integers(0, dy + 1))]
    bl = [int(rng.integers(0, dx + 1)), height - 1 - int(rng.integers(0, dy + 1))]
    start = [[0, 0], [width - 1, 0], [width - 1, height - 1], [0, height - 1]]
    return start, [tl, tr, br, bl]


def augment_pair(image: torch.Tensor, mask: torch.Tensor, seed,
                 config: AugmentConfig | None = None):
    """One augmentation draw on a (3,H,W) uint8 image and (1,H,W) uint8 mask."""
    cfg = config or AugmentConfig()
    rng = np.random.default_rng(seed)
    img = image.to(torch.float32)
    msk = mask.to(torch.float32)

    h, w = img.shape[-2:]
    top, left, ch, cw = _crop_params(rng, h, w, cfg.crop_area, cfg.crop_ratio)
    size = [cfg.crop_size, cfg.crop_size]
    img = TF.resized_crop(img, top, left, ch, cw, size,
                          interpolation=InterpolationMode.BILINEAR, antialias=True)
    msk = TF.resized_crop(msk, top, left, ch, cw, size,
                          interpolation=InterpolationMode.NEAREST)

    if rng.random() < cfg.flip_prob:
        img = TF.horizontal_flip(img)
        msk = TF.horizontal_flip(msk)
    if rng.random() < cfg.flip_prob:
        img = TF.vertical_flip(img)
        msk = TF.vertical_flip(msk)

    angle = float(rng.uniform(-cfg.rotate_deg, cfg.rotate_deg))
    img = TF.rotate(img, angle, interpolation=InterpolationMode.BILINEAR, fill=[WHITE] * 3)
    msk = TF.rotate(msk, angle, interpolation=InterpolationMode.NEAREST, fill=[WHITE])

    translate = [int(rng.uniform(-cfg.translate_frac, cfg.translate_frac) * cfg.crop_size),
                 int(rng.uniform(-cfg.translate_frac, cfg.translate_frac) * cfg.crop_size)]
    scale = float(rng.uniform(*cfg.scale_range))
    shear = [float(rng.uniform(-cfg.shear_deg, cfg.shear_deg)),
             float(rng.uniform(-cfg.shear_deg, cfg.shear_deg))]
    img = TF.affine(img, angle=0.0, translate=translate, scale=scale, shear=shear,
                    interpolation=InterpolationMode.BILINEAR, fill=[WHITE] * 3)
    msk = TF.affine(msk, angle=0.0, translate=translate, scale=scale, shear=shear,
                    interpolation=InterpolationMode.NEAREST, fill=[WHITE])

    if rng.random() < cfg.perspective_prob:
        start, end = _perspective_points(rng, cfg.crop_size, cfg.crop_size,
                                         cfg.perspective_scale)
        img = TF.perspective(img, start, end,
                             interpolation=InterpolationMode.BILINEAR, fill=[WHITE] * 3)
        msk = TF.perspective(msk, start, end,
                             interpolation=InterpolationMode.NEAREST, fill=[WHITE])

    if cfg.photometric:
        img = img.clamp(0.0, 255.0) / 255.0
        order = rng.permutation(4)
        factors = {
            0: float(rng.uniform(1.0 - cfg.brightness, 1.0 + cfg.brightness)),
            1: float(rng.uniform(1.0 - cfg.contrast, 1.0 + cfg.contrast)),
            2: float(rng.uniform(1.0 - cfg.saturation, 1.0 + cfg.saturation)),
            3: float(rng.uniform(-cfg.hue, cfg.hue)),
        }
        for op in order:
            if op == 0:
                img = TF.adjust_brightness(img, factors[0])
            elif op == 1:
                img = TF.adjust_contrast(img, factors[1])
            elif op == 2:
                img = TF.adjust_saturation(img, factors[2])
            else:
                img = TF.adjust_hue(img, factors[3])
        sigma = float(rng.uniform(*cfg.blur_sigma))
        img = TF.gaussian_blur(img, kernel_size=[3, 3], sigma=[sigma, sigma])
        img = (img * 255.0).clamp(0.0, 255.0)

    img = img.round().to(torch.uint8)
    msk = torch.where(msk >= 128.0, 255.0, 0.0).to(torch.uint8)
    return img, msk
