"""Plan-file datasets.

Reads the generator's JSON Lines experiment plans (roles synthetic_train /
real_train / real_test) and the referenced PNG pairs (masks: joint = 0,
background = 255).  Inputs reach the network as float tensors in [0, 1];
targets are 1 for joint pixels.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch
from PIL import Image
from torch.utils.data import Dataset

from .augment import AugmentConfig, augment_pair


def load_plan(path) -> dict:
    """Plan JSONL -> {"header": ..., "synthetic_train": [...], ...} record lists."""
    buckets = {"synthetic_train": [], "real_train": [], "real_test": []}
    header = None
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            if "header" in rec:
                header = rec["header"]
                continue
            buckets[rec["role"]].append(rec)
    if header is None:
        raise ValueError(f"{path}: missing plan header")
    return {"header": header, **buckets}


def read_pair(image_path, mask_path):
    img = np.array(Image.open(image_path).convert("RGB"), dtype=np.uint8)
    msk = np.array(Image.open(mask_path).convert("L"), dtype=np.uint8)
    return img, msk


def split_train_val_records(records, val_fraction: float, seed: int):
    """Deterministic 90/10 split of the real-train records."""
    order = np.random.default_rng(seed).permutation(len(records))
    n_val = int(round(val_fraction * len(records)))
    val_idx = set(order[:n_val].tolist())
    train = [r for i, r in enumerate(records) if i not in val_idx]
    val = [r for i, r in enumerate(records) if i in val_idx]
    return train, val


class PairDataset(Dataset):
    """Image/mask pairs with optional per-epoch augmentation.

    Augmentation draws are seeded by (seed, epoch, index) so runs are
    reproducible; call ``set_epoch`` between epochs.
    """

    def __init__(self, records, augment: AugmentConfig | None = None,
                 crop_size: int = 768, seed: int = 0):
        self.records = list(records)
        self.augment = augment
        self.crop_size = crop_size
        self.seed = seed
        self.epoch = 0

    def set_epoch(self, epoch: int) -> None:
        self.epoch = epoch

    def __len__(self) -> int:
        return len(self.records)

    def __getitem__(self, idx: int):
        rec = self.records[idx]
        img, msk = read_pair(rec["image_path"], rec["mask_path"])
        image = torch.from_numpy(img).permute(2, 0, 1)
        mask = torch.from_numpy(msk)[None, :, :]
        if self.augment is not None:
            image, mask = augment_pair(image, mask, (self.seed, self.epoch, idx),
                                       self.augment)
        else:
            if image.shape[-2:] != (self.crop_size, self.crop_size):
                image = torch.nn.functional.interpolate(
                    image[None].float(), size=(self.crop_size, self.crop_size),
                    mode="bilinear", align_corners=False)[0].round().to(torch.uint8)
                mask = torch.nn.functional.interpolate(
                    mask[None].float(), size=(self.crop_size, self.crop_size),
                    mode="nearest")[0].to(torch.uint8)
        x = image.float() / 255.0
        y = (mask == 0).float()
        return x, y
