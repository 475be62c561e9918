import numpy as np
import pytest
from PIL import Image

from fracsynth.dataset import (
    EXPERIMENTS,
    FINETUNE_PROPORTIONS,
    ManifestRecord,
    ManifestRoot,
    PROPORTIONS,
    build_experiment_matrix,
    build_manifest,
    load_manifest_jsonl,
    load_plan_jsonl,
    save_manifest_jsonl,
    save_plan_jsonl,
    split_train_val,
    write_datasheet,
)
from fracsynth.errors import ValidationError


def make_pairs(directory, n, prefix="img"):
    directory.mkdir(parents=True, exist_ok=True)
    px = np.full((4, 4), 255, dtype=np.uint8)
    for i in range(n):
        Image.fromarray(px, mode="L").save(directory / f"{prefix}_{i % 8}_{i}.png")
        Image.fromarray(px, mode="L").save(directory / f"{prefix}_{i % 8}_{i}_mask.png")


def record(i, domain="real", kind="box", tag="cardboard"):
    return ManifestRecord(
        image_path=f"/data/{tag}/{i:04d}.png", mask_path=f"/data/{tag}/{i:04d}_mask.png",
        domain=domain, scene_kind=kind, site_tag=tag,
    )


def full_manifest(n_real=40, n_synth=30):
    records = []
    for kind, tags in (("box", ("cardboard", "pattern")), ("slope", ("larvik", "rv4"))):
        for tag in tags:
            records += [record(i, "real", kind, tag) for i in range(n_real)]
        records += [
            ManifestRecord(
                image_path=f"/data/synth_{kind}/{i:04d}.png",
                mask_path=f"/data/synth_{kind}/{i:04d}_mask.png",
                domain="synthetic", scene_kind=kind, site_tag=f"dfn-{kind}",
            )
            for i in range(n_synth)
        ]
    return records


class TestBuildManifest:
    def test_pairs_matched(self, tmp_path):
        make_pairs(tmp_path / "boxes", 12)
        roots = [ManifestRoot(str(tmp_path / "boxes"), "real", "box", "cardboard")]
        records, errors = build_manifest(roots)
        assert len(records) == 12
        assert errors == []
        assert all(r.site_tag == "cardboard" for r in records)
        # texture id parsed from the {stem}_{texture}_{pose} convention
        assert {r.texture_id for r in records} <= set(range(8))

    def test_empty_directory(self, tmp_path):
        (tmp_path / "empty").mkdir()
        records, errors = build_manifest(
            [ManifestRoot(str(tmp_path / "empty"), "real", "box", "x")]
        )
        assert records == [] and errors == []

    def test_missing_mask_reported(self, tmp_path):
        d = tmp_path / "broken"
        make_pairs(d, 3)
        (d / "lonely_0_9.png").write_bytes((d / "img_0_0.png").read_bytes())
        records, errors = build_manifest([ManifestRoot(str(d), "real", "box", "x")])
        assert len(records) == 3
        assert len(errors) == 1
        assert "missing mask" in errors[0][1]


class TestSplit:
    def test_90_10(self):
        records = [record(i) for i in range(1000)]
        out = split_train_val(records, seed=3)
        assert sum(1 for r in out if r.split == "val") == 100
        assert sum(1 for r in out if r.split == "train") == 900

    def test_stratified_within_one(self):
        records = [record(i, tag="cardboard") for i in range(95)]
        records += [record(i, tag="pattern") for i in range(55)]
        out = split_train_val(records, seed=1)
        for tag, n in (("cardboard", 95), ("pattern", 55)):
            n_val = sum(1 for r in out if r.site_tag == tag and r.split == "val")
            assert abs(n_val - 0.1 * n) <= 1.0

    def test_determinism(self):
        records = [record(i) for i in range(50)]
        a = split_train_val(records, seed=9)
        b = split_train_val(records, seed=9)
        assert [(r.image_path, r.split) for r in a] == [(r.image_path, r.split) for r in b]

    def test_too_few(self):
        with pytest.raises(ValidationError):
            split_train_val([record(i) for i in range(9)], seed=0)


class TestExperimentMatrix:
    def test_120_plans(self):
        plans = build_experiment_matrix(full_manifest(), seed=5)
        assert len(plans) == 120
        per_exp = {}
        for p in plans:
            per_exp.setdefault(p.name, []).append(p)
        assert set(per_exp) == {e.name for e in EXPERIMENTS}
        for name, group in per_exp.items():
            sm = [p for p in group if p.strategy == "SimpleMixed"]
            ft = [p for p in group if p.strategy == "Finetune"]
            assert sorted(p.real_proportion for p in sm) == sorted(PROPORTIONS)
            assert sorted(p.real_proportion for p in ft) == sorted(FINETUNE_PROPORTIONS)

    def test_generalisation_disjoint_tags(self):
        plans = build_experiment_matrix(full_manifest(), seed=5)
        gen = [p for p in plans if p.name == "gen_larvik"]
        for p in gen:
            assert {r.site_tag for r in p.real_train} <= {"rv4"}
            assert {r.site_tag for r in p.real_test} == {"larvik"}

    def test_zero_percent_empty_real(self):
        plans = build_experiment_matrix(full_manifest(), seed=5)
        zero = [p for p in plans if p.real_proportion == 0]
        assert zero and all(p.real_train == () for p in zero)
        assert all(p.strategy == "SimpleMixed" for p in zero)

    def test_full_real_benchmark_has_no_synthetic(self):
        plans = build_experiment_matrix(full_manifest(), seed=5)
        full = [p for p in plans if p.real_proportion == 100]
        assert full and all(p.synthetic == () for p in full)

    def test_no_train_test_overlap_and_proportions(self):
        plans = build_experiment_matrix(full_manifest(), seed=5)
        for p in plans:
            train = {r.image_path for r in p.real_train}
            test = {r.image_path for r in p.real_test}
            assert not (train & test)
            if not EXPERIMENTS[[e.name for e in EXPERIMENTS].index(p.name)].generalisation:
                pool = 2 * 40 if p.name in ("box", "slope") else 40
                pool_after_test = pool - int(round(0.3 * 40)) * (2 if p.name in ("box", "slope") else 1)
                assert abs(len(p.real_train) - p.real_proportion / 100 * pool_after_test) <= 1.0

    def test_nested_proportions(self):
        plans = build_experiment_matrix(full_manifest(), seed=5)
        larvik = {p.real_proportion: p for p in plans
                  if p.name == "larvik" and p.strategy == "SimpleMixed"}
        p10 = {r.image_path for r in larvik[10].real_train}
        p50 = {r.image_path for r in larvik[50].real_train}
        assert p10 <= p50

    def test_reproducible(self):
        a = build_experiment_matrix(full_manifest(), seed=7)
        b = build_experiment_matrix(full_manifest(), seed=7)
        assert [(p.plan_id, [r.image_path for r in p.real_train]) for p in a] == \
               [(p.plan_id, [r.image_path for r in p.real_train]) for p in b]

    def test_empty_manifest(self):
        with pytest.raises(ValidationError):
            build_experiment_matrix([], seed=0)


class TestSerialisation:
    def test_manifest_round_trip(self, tmp_path):
        records = full_manifest(8, 4)
        path = tmp_path / "manifest.jsonl"
        save_manifest_jsonl(records, path)
        back = load_manifest_jsonl(path)
        assert sorted(r.image_path for r in back) == sorted(r.image_path for r in records)

    def test_plan_round_trip_byte_identical(self, tmp_path):
        plans = build_experiment_matrix(full_manifest(), seed=11)
        plan = plans[0]
        p1 = save_plan_jsonl(plan, tmp_path)
        again = build_experiment_matrix(full_manifest(), seed=11)[0]
        d2 = tmp_path / "second"
        d2.mkdir()
        p2 = save_plan_jsonl(again, d2)
        assert open(p1, "rb").read() == open(p2, "rb").read()
        loaded = load_plan_jsonl(p1)
        assert loaded.plan_id == plan.plan_id
        assert [r.image_path for r in loaded.real_train] == \
               [r.image_path for r in plan.real_train]

    def test_datasheet(self, tmp_path):
        records = full_manifest(8, 4)
        plans = build_experiment_matrix(full_manifest(), seed=2)
        path = tmp_path / "datasheet.md"
        write_datasheet(records, plans, seed=2, path=path, notes=("extra note",))
        text = path.read_text()
        assert "joint = 0" in text
        assert "extra note" in text
        assert "| real | box | cardboard | 8 |" in text
