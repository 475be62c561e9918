"""Inference: probability maps and binary mask PNGs in the dataset convention
(joint = 0, background = 255; ties at the threshold are joint).
"""

from __future__ import annotations

import warnings
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .models import build_model

OUTPUT_SIZE = (800, 800)


def load_checkpoint(path, device: str = "cpu"):
    state = torch.load(path, map_location=device, weights_only=False)
    model = build_model(state["architecture"], pretrained=False)
    model.load_state_dict(state["model"])
    model.to(device)
    model.eval()
    return model


def binarize_probs(probs: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """Probability of joint -> uint8 mask; >= threshold is joint (0)."""
    return np.where(probs >= threshold, 0, 255).astype(np.uint8)


@torch.no_grad()
def predict(model, image_paths, device: str = "cpu", threshold: float = 0.5,
            output_size=OUTPUT_SIZE):
    """Per-image joint probability maps and binary masks.

    Images whose size differs from ``output_size`` are resized (with a
    warning) so downstream evaluation sees a consistent geometry.
    """
    probs_out = []
    masks_out = []
    for path in image_paths:
        img = np.asarray(Image.open(path).convert("RGB"), dtype=np.uint8)
        x = torch.from_numpy(img).permute(2, 0, 1)[None].float() / 255.0
        logits = model(x.to(device))
        probs = torch.sigmoid(logits)[0, 0].cpu().numpy()
        if probs.shape != tuple(output_size):
            warnings.warn(
                f"{path}: prediction {probs.shape} resized to {tuple(output_size)}"
            )
            t = torch.from_numpy(probs)[None, None]
            t = torch.nn.functional.interpolate(t, size=tuple(output_size),
                                                mode="bilinear", align_corners=False)
            probs = t[0, 0].numpy()
        probs_out.append(probs)
        masks_out.append(binarize_probs(probs, threshold))
    return probs_out, masks_out


def save_prediction_masks(masks, image_paths, out_dir) -> list:
    """Write `{stem}_mask.png` predictions next to the given image names."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for mask, src in zip(masks, image_paths):
        stem = Path(src).stem
        path = out_dir / f"{stem}_mask.png"
        Image.fromarray(mask, mode="L").save(path)
        written.append(str(path))
    return written
