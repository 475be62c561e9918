"""Dataset assembly: manifests of image/mask pairs, train/val splits, and the
ten-experiment matrix with controlled real-data proportions.

Each experiment pairs one synthetic source with real train/test sources; the
generalisation variants train and test on different sites.  Every experiment
runs under two strategies: SimpleMixed (joint synthetic+real training) at
real proportions {0, 10, 30, 50, 70, 90, 100}% and Finetune (synthetic
pretraining, then real-only fine-tuning) at {10, 30, 50, 70, 90}%, giving
120 materialised plans per architecture family.

The real test set is fixed *before* the train proportion is applied (rather
than testing on each proportion's leftover), so every proportion of an
experiment is scored against the same images.  The datasheet records this
choice.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ValidationError

PROPORTIONS = (0, 10, 30, 50, 70, 90, 100)
FINETUNE_PROPORTIONS = (10, 30, 50, 70, 90)
STRATEGIES = ("SimpleMixed", "Finetune")

DEFAULT_TEST_FRACTION = 0.3


@dataclass(frozen=True)
class ManifestRecord:
    image_path: str
    mask_path: str
    domain: str          # "synthetic" | "real"
    scene_kind: str      # "slope" | "box"
    site_tag: str
    texture_id: int = -1
    split: str | None = None

    def __post_init__(self):
        if self.domain not in ("synthetic", "real"):
            raise ValidationError(f"bad domain {self.domain}")
        if self.scene_kind not in ("slope", "box"):
            raise ValidationError(f"bad scene_kind {self.scene_kind}")
        if self.split not in (None, "train", "val", "test"):
            raise ValidationError(f"bad split {self.split}")

    def to_json(self) -> dict:
        return {
            "image_path": self.image_path,
            "mask_path": self.mask_path,
            "domain": self.domain,
            "scene_kind": self.scene_kind,
            "site_tag": self.site_tag,
            "texture_id": self.texture_id,
            "split": self.split,
        }

    @classmethod
    def from_json(cls, d: dict) -> "ManifestRecord":
        return cls(**d)


@dataclass(frozen=True)
class ManifestRoot:
    path: str
    domain: str
    scene_kind: str
    site_tag: str


def _texture_from_name(stem: str) -> int:
    parts = stem.split("_")
    if len(parts) >= 3:
        try:
            return int(parts[-2])
        except ValueError:
            return -1
    return -1


def build_manifest(roots) -> tuple:
    """Scan directories of paired `{stem}.png` / `{stem}_mask.png` files.

    Returns (records, errors); images without a mask (and orphan masks) are
    skipped and reported.
    """
    records = []
    errors = []
    for root in roots:
        base = Path(root.path)
        if not base.is_dir():
            errors.append((root.path, "not a directory"))
            continue
        pngs = sorted(p for p in base.rglob("*.png"))
        masks = {p for p in pngs if p.stem.endswith("_mask")}
        images = [p for p in pngs if not p.stem.endswith("_mask")]
        used_masks = set()
        for img in images:
            mask = img.with_name(img.stem + "_mask.png")
            if mask not in masks:
                errors.append((str(img), "missing mask"))
                continue
            used_masks.add(mask)
            records.append(
                ManifestRecord(
                    image_path=str(img),
                    mask_path=str(mask),
                    domain=root.domain,
                    scene_kind=root.scene_kind,
                    site_tag=root.site_tag,
                    texture_id=_texture_from_name(img.stem),
                )
            )
        for orphan in sorted(masks - used_masks):
            errors.append((str(orphan), "mask without image"))
    return records, errors


def _tag_stream(seed: int, *tokens) -> np.random.Generator:
    h = hashlib.sha256(("|".join(map(str, tokens))).encode()).digest()
    return np.random.default_rng(np.random.SeedSequence([int(seed), int.from_bytes(h[:8], "little")]))


def split_train_val(records, seed: int, val_fraction: float = 0.1) -> list:
    """Assign train/val splits, stratified by site_tag (test already held out)."""
    if len(records) < 10:
        raise ValidationError(f"need at least 10 records to split, got {len(records)}")
    by_tag: dict = {}
    for r in records:
        by_tag.setdefault(r.site_tag, []).append(r)
    out = []
    for tag in sorted(by_tag):
        group = sorted(by_tag[tag], key=lambda r: r.image_path)
        rng = _tag_stream(seed, "split", tag)
        order = rng.permutation(len(group))
        n_val = int(round(val_fraction * len(group)))
        val_idx = set(order[:n_val].tolist())
        for i, r in enumerate(group):
            out.append(replace(r, split="val" if i in val_idx else "train"))
    return sorted(out, key=lambda r: r.image_path)


# ---------------------------------------------------------------------------
# Experiment matrix
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentDef:
    name: str
    scene_kind: str
    train_tags: tuple
    test_tags: tuple

    @property
    def generalisation(self) -> bool:
        return set(self.train_tags) != set(self.test_tags)


EXPERIMENTS = (
    ExperimentDef("box", "box", ("cardboard", "pattern"), ("cardboard", "pattern")),
    ExperimentDef("pattern_box", "box", ("pattern",), ("pattern",)),
    ExperimentDef("cardboard_box", "box", ("cardboard",), ("cardboard",)),
    ExperimentDef("gen_pattern_box", "box", ("cardboard",), ("pattern",)),
    ExperimentDef("gen_cardboard_box", "box", ("pattern",), ("cardboard",)),
    ExperimentDef("slope", "slope", ("larvik", "rv4"), ("larvik", "rv4")),
    ExperimentDef("larvik", "slope", ("larvik",), ("larvik",)),
    ExperimentDef("rv4", "slope", ("rv4",), ("rv4",)),
    ExperimentDef("gen_larvik", "slope", ("rv4",), ("larvik",)),
    ExperimentDef("gen_rv4", "slope", ("larvik",), ("rv4",)),
)


@dataclass(frozen=True)
class ExperimentPlan:
    name: str
    strategy: str
    real_proportion: int
    synthetic: tuple
    real_train: tuple
    real_test: tuple

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValidationError(f"bad strategy {self.strategy}")
        if self.real_proportion not in PROPORTIONS:
            raise ValidationError(f"bad proportion {self.real_proportion}")
        if self.strategy == "Finetune" and self.real_proportion in (0, 100):
            raise ValidationError("Finetune excludes the 0% and 100% settings")
        train_paths = {r.image_path for r in self.real_train}
        test_paths = {r.image_path for r in self.real_test}
        overlap = train_paths & test_paths
        if overlap:
            raise ValidationError(f"train/test overlap: {sorted(overlap)[:3]}")

    @property
    def plan_id(self) -> str:
        return f"{self.name}_{self.strategy}_{self.real_proportion}"


def build_experiment_matrix(manifests, seed: int,
                            test_fraction: float = DEFAULT_TEST_FRACTION) -> list:
    """Materialise the 120 plans (10 experiments x 12 strategy/proportion combos).

    Per experiment the real pool is shuffled once and proportions take nested
    prefixes, so larger proportions strictly extend smaller ones and the
    realisation error stays under one image.
    """
    if not manifests:
        raise ValidationError("empty manifest")
    if not (0.0 < test_fraction < 1.0):
        raise ValidationError("test_fraction must be in (0, 1)")
    synthetic = [r for r in manifests if r.domain == "synthetic"]
    real = [r for r in manifests if r.domain == "real"]
    plans = []
    for exp in EXPERIMENTS:
        synth = tuple(sorted((r for r in synthetic if r.scene_kind == exp.scene_kind),
                             key=lambda r: r.image_path))
        if not synth:
            raise ValidationError(f"{exp.name}: no synthetic records of kind {exp.scene_kind}")
        train_src = [r for r in real if r.scene_kind == exp.scene_kind
                     and r.site_tag in exp.train_tags]
        test_src = [r for r in real if r.scene_kind == exp.scene_kind
                    and r.site_tag in exp.test_tags]
        if not train_src or not test_src:
            raise ValidationError(f"{exp.name}: missing real source data")

        if exp.generalisation:
            pool = sorted(train_src, key=lambda r: r.image_path)
            test = tuple(replace(r, split="test")
                         for r in sorted(test_src, key=lambda r: r.image_path))
        else:
            pool = []
            test = []
            by_tag: dict = {}
            for r in sorted(train_src, key=lambda r: r.image_path):
                by_tag.setdefault(r.site_tag, []).append(r)
            for tag in sorted(by_tag):
                group = by_tag[tag]
                rng = _tag_stream(seed, "test-holdout", exp.name, tag)
                order = rng.permutation(len(group))
                n_test = int(round(test_fraction * len(group)))
                test_idx = set(order[:n_test].tolist())
                for i, r in enumerate(group):
                    if i in test_idx:
                        test.append(replace(r, split="test"))
                    else:
                        pool.append(r)
            test = tuple(sorted(test, key=lambda r: r.image_path))

        rng = _tag_stream(seed, "pool-order", exp.name)
        pool_order = [pool[i] for i in rng.permutation(len(pool))]

        for strategy in STRATEGIES:
            props = PROPORTIONS if strategy == "SimpleMixed" else FINETUNE_PROPORTIONS
            for p in props:
                n_real = int(round(p / 100.0 * len(pool_order)))
                real_train = tuple(replace(r, split="train") for r in pool_order[:n_real])
                use_synth = synth
                if strategy == "SimpleMixed" and p == 100:
                    use_synth = ()  # full-real benchmark
                plans.append(
                    ExperimentPlan(
                        name=exp.name, strategy=strategy, real_proportion=p,
                        synthetic=tuple(replace(r, split="train") for r in use_synth),
                        real_train=real_train, real_test=test,
                    )
                )
    return plans


# ---------------------------------------------------------------------------
# Serialisation
# ---------------------------------------------------------------------------

def save_manifest_jsonl(records, path) -> None:
    with open(path, "w") as fh:
        for r in sorted(records, key=lambda r: r.image_path):
            fh.write(json.dumps(r.to_json(), sort_keys=True) + "\n")


def load_manifest_jsonl(path) -> list:
    out = []
    with open(path) as fh:
        for line in fh:
            if line.strip():
                out.append(ManifestRecord.from_json(json.loads(line)))
    return out


def save_plan_jsonl(plan: ExperimentPlan, out_dir) -> str:
    path = os.path.join(out_dir, f"plan_{plan.plan_id}.jsonl")
    with open(path, "w") as fh:
        head = {
            "plan": plan.plan_id, "experiment": plan.name,
            "strategy": plan.strategy, "real_proportion": plan.real_proportion,
            "counts": {"synthetic": len(plan.synthetic),
                       "real_train": len(plan.real_train),
                       "real_test": len(plan.real_test)},
        }
        fh.write(json.dumps({"header": head}, sort_keys=True) + "\n")
        for role, records in (("synthetic_train", plan.synthetic),
                              ("real_train", plan.real_train),
                              ("real_test", plan.real_test)):
            for r in records:
                d = r.to_json()
                d["role"] = role
                fh.write(json.dumps(d, sort_keys=True) + "\n")
    return path


def load_plan_jsonl(path) -> ExperimentPlan:
    header = None
    buckets = {"synthetic_train": [], "real_train": [], "real_test": []}
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            d = json.loads(line)
            if "header" in d:
                header = d["header"]
                continue
            role = d.pop("role")
            buckets[role].append(ManifestRecord.from_json(d))
    if header is None:
        raise ValidationError(f"{path}: missing plan header")
    return ExperimentPlan(
        name=header["experiment"], strategy=header["strategy"],
        real_proportion=header["real_proportion"],
        synthetic=tuple(buckets["synthetic_train"]),
        real_train=tuple(buckets["real_train"]),
        real_test=tuple(buckets["real_test"]),
    )


def write_datasheet(records, plans, seed, path, notes=()) -> None:
    """Markdown datasheet: roster counts, seeds, and flagged conventions."""
    roster: dict = {}
    for r in records:
        key = (r.domain, r.scene_kind, r.site_tag)
        roster[key] = roster.get(key, 0) + 1
    lines = ["# Dataset datasheet", ""]
    lines.append(f"- master seed: {seed}")
    lines.append(f"- total images: {len(records)}")
    lines.append(f"- experiment plans: {len(plans)}")
    lines.append("")
    lines.append("## Roster")
    lines.append("")
    lines.append("| domain | scene | site | images |")
    lines.append("|---|---|---|---|")
    for (dom, kind, tag), n in sorted(roster.items()):
        lines.append(f"| {dom} | {kind} | {tag} | {n} |")
    lines.append("")
    lines.append("## Conventions and flagged choices")
    lines.append("")
    base_notes = (
        "masks: joint = 0 (black), background = 255 (white), 8-bit PNG",
        "real test sets are fixed before the train proportion is applied, "
        "so all proportions of an experiment share one test set",
        "trace length for the thickness law is measured after waviness",
        "random-joint fraction, size distributions and dispersions are "
        "engineering defaults (config-exposed), not published constants",
        "block statistics use the jittered-persistent-plane simplification",
        "kinematic screening is a Markland daylight/friction test, report-only",
    )
    for n in base_notes + tuple(notes):
        lines.append(f"- {n}")
    lines.append("")
    with open(path, "w") as fh:
        fh.write("\n".join(lines))
