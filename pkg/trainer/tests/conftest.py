import json

import numpy as np
import pytest
from PIL import Image


def make_band_pair(rng, size=256, n_bands=3):
    """Synthetic textured image with dark bands; mask marks the bands (0)."""
    img = rng.integers(120, 200, size=(size, size, 3), dtype=np.uint8)
    mask = np.full((size, size), 255, dtype=np.uint8)
    for _ in range(n_bands):
        if rng.random() < 0.5:
            c = int(rng.integers(10, size - 10))
            w = int(rng.integers(3, 9))
            mask[:, c - w // 2:c + w // 2 + 1] = 0
        else:
            c = int(rng.integers(10, size - 10))
            w = int(rng.integers(3, 9))
            mask[c - w // 2:c + w // 2 + 1, :] = 0
    img[mask == 0] = (img[mask == 0] * 0.25).astype(np.uint8)
    return img, mask


def write_pairs(directory, n, seed=0, size=256):
    directory.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    records = []
    for i in range(n):
        img, mask = make_band_pair(rng, size=size)
        ip = directory / f"pair{i:03d}.png"
        mp = directory / f"pair{i:03d}_mask.png"
        Image.fromarray(img, mode="RGB").save(ip)
        Image.fromarray(mask, mode="L").save(mp)
        records.append({
            "image_path": str(ip), "mask_path": str(mp),
            "domain": "synthetic", "scene_kind": "slope",
            "site_tag": "bands", "texture_id": 0, "split": "train",
        })
    return records


def write_plan(path, synthetic, real_train, real_test, name="smoke",
               strategy="SimpleMixed", proportion=50):
    with open(path, "w") as fh:
        head = {"plan": f"{name}_{strategy}_{proportion}", "experiment": name,
                "strategy": strategy, "real_proportion": proportion,
                "counts": {"synthetic": len(synthetic),
                           "real_train": len(real_train),
                           "real_test": len(real_test)}}
        fh.write(json.dumps({"header": head}, sort_keys=True) + "\n")
        for role, records in (("synthetic_train", synthetic),
                              ("real_train", real_train),
                              ("real_test", real_test)):
            for r in records:
                d = dict(r)
                d["role"] = role
                fh.write(json.dumps(d, sort_keys=True) + "\n")
    return path


@pytest.fixture
def band_dataset(tmp_path):
    return write_pairs(tmp_path / "pairs", 12, seed=3)
