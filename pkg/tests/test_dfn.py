import math

import numpy as np
import pytest

from fracsynth.blockshape import Parallelepiped
from fracsynth.dfn import (
    Dfn,
    DfnConfig,
    JointSet,
    RANDOM_SET_ID,
    Region,
    SizeDist,
    apply_chronology_termination,
    build_dfn_suite,
    estimate_p32,
    generate_dfn,
    load_dfn_jsonl,
    save_dfn_jsonl,
)
from fracsynth.errors import ValidationError
from fracsynth.geometry import Orientation, Plane, Polygon3


def region_10():
    return Region(lo=np.zeros(3), hi=np.full(3, 10.0))


def horizontal_set(spacing=1.0, kappa=math.inf, mu=math.log(2.0), sigma=0.3, rank=0):
    return JointSet(
        mean_orientation=Orientation(0.0, 0.0),
        spacing=spacing,
        p32=estimate_p32(spacing),
        fisher_kappa=kappa,
        size_dist=SizeDist(mu=mu, sigma=sigma),
        chronology_rank=rank,
    )


class TestEstimateP32:
    @pytest.mark.parametrize("spacing,expected", [(1.0, 1.0), (0.5, 2.0), (4.0, 0.25)])
    def test_identity(self, spacing, expected):
        assert estimate_p32(spacing) == pytest.approx(expected)

    def test_invalid(self):
        with pytest.raises(ValidationError):
            estimate_p32(0.0)


class TestGenerate:
    def test_persistent_set_hits_target(self):
        # radius >> region so every fracture spans the box
        js = horizontal_set(spacing=1.0, mu=math.log(100.0), sigma=0.0)
        cfg = DfnConfig(random_fraction=0.0)
        achieved = []
        for seed in range(20):
            dfn = generate_dfn([js], region_10(), seed=seed, config=cfg)
            achieved.append(dfn.achieved_p32())
        mean = float(np.mean(achieved))
        assert mean == pytest.approx(1.0, abs=0.1)
        assert all(a >= 1.0 for a in achieved)  # stopping rule overshoots, never undershoots

    def test_achieved_p32_within_15_percent(self):
        js = horizontal_set(spacing=1.0)
        cfg = DfnConfig(random_fraction=0.0)
        achieved = [
            generate_dfn([js], region_10(), seed=s, config=cfg).achieved_p32()
            for s in range(20)
        ]
        assert abs(float(np.mean(achieved)) - 1.0) <= 0.15

    def test_no_random_joints_when_fraction_zero(self):
        sets = [horizontal_set(rank=0), horizontal_set(spacing=2.0, rank=1)]
        dfn = generate_dfn(sets, region_10(), seed=3, config=DfnConfig(random_fraction=0.0))
        assert all(f.set_id in (0, 1) for f in dfn.fractures)

    def test_random_joints_added(self):
        dfn = generate_dfn([horizontal_set()], region_10(), seed=3,
                           config=DfnConfig(random_fraction=0.2))
        rand = [f for f in dfn.fractures if f.set_id == RANDOM_SET_ID]
        sys = [f for f in dfn.fractures if f.set_id == 0]
        assert rand and sys
        assert all(f.rank == 1 for f in rand)

    def test_determinism(self):
        sets = [horizontal_set()]
        cfg = DfnConfig(random_fraction=0.1)
        a = generate_dfn(sets, region_10(), seed=11, config=cfg)
        b = generate_dfn(sets, region_10(), seed=11, config=cfg)
        assert len(a.fractures) == len(b.fractures)
        for fa, fb in zip(a.fractures, b.fractures):
            assert np.array_equal(fa.polygon.vertices, fb.polygon.vertices)

    def test_centroids_inside_region(self):
        dfn = generate_dfn([horizontal_set()], region_10(), seed=1,
                           config=DfnConfig(random_fraction=0.1))
        for f in dfn.fractures:
            assert np.all(f.center >= dfn.region.lo) and np.all(f.center <= dfn.region.hi)


def two_orthogonal_fractures():
    from fracsynth.dfn import Fracture, _disc_polygon

    older = Fracture(
        polygon=_disc_polygon(np.array([5.0, 5.0, 5.0]), np.array([0.0, 0.0, 1.0]), 4.0, 12),
        set_id=0, rank=0, center=np.array([5.0, 5.0, 5.0]),
    )
    younger = Fracture(
        polygon=_disc_polygon(np.array([5.0, 5.0, 5.0]), np.array([1.0, 0.0, 0.0]), 3.0, 12),
        set_id=1, rank=1, center=np.array([5.0, 5.0, 5.0]),
    )
    return older, younger


class TestTermination:
    def test_identity_at_zero(self):
        dfn = generate_dfn([horizontal_set()], region_10(), seed=5,
                           config=DfnConfig(random_fraction=0.0))
        out = apply_chronology_termination(dfn, 0.0, seed=5)
        assert out is dfn

    def test_full_termination_halves_younger(self):
        older, younger = two_orthogonal_fractures()
        dfn = Dfn(region=region_10(), fractures=(older, younger), seed=0, provenance="x")
        out = apply_chronology_termination(dfn, 1.0, seed=0)
        assert out.fractures[0].polygon.area() == pytest.approx(older.polygon.area())
        ratio = out.fractures[1].polygon.area() / younger.polygon.area()
        assert ratio == pytest.approx(0.5, abs=0.02)
        # the clipped polygon is bounded by the older plane
        sd = older.polygon.plane.signed_distance(out.fractures[1].polygon.vertices)
        assert sd.min() >= -1e-9 or sd.max() <= 1e-9

    def test_non_intersecting_unchanged(self):
        from fracsynth.dfn import Fracture, _disc_polygon

        older = Fracture(
            polygon=_disc_polygon(np.array([2.0, 2.0, 2.0]), np.array([0.0, 0.0, 1.0]), 1.0, 12),
            set_id=0, rank=0, center=np.array([2.0, 2.0, 2.0]),
        )
        younger = Fracture(
            polygon=_disc_polygon(np.array([8.0, 8.0, 8.0]), np.array([1.0, 0.0, 0.0]), 1.0, 12),
            set_id=1, rank=1, center=np.array([8.0, 8.0, 8.0]),
        )
        dfn = Dfn(region=region_10(), fractures=(older, younger), seed=0, provenance="x")
        out = apply_chronology_termination(dfn, 1.0, seed=0)
        assert np.array_equal(out.fractures[1].polygon.vertices, younger.polygon.vertices)

    def test_monotone_area(self):
        sets = [
            horizontal_set(rank=0),
            JointSet(
                mean_orientation=Orientation(90.0, 90.0), spacing=1.0, p32=1.0,
                fisher_kappa=50.0, size_dist=SizeDist(mu=math.log(2.0), sigma=0.3),
                chronology_rank=1,
            ),
        ]
        dfn = generate_dfn(sets, region_10(), seed=9, config=DfnConfig(random_fraction=0.0))
        out = apply_chronology_termination(dfn, 0.9, seed=9)
        assert len(out.fractures) == len(dfn.fractures)
        for fa, fb in zip(dfn.fractures, out.fractures):
            assert fb.polygon.area() <= fa.polygon.area() + 1e-9
            assert fb.rank == fa.rank


class TestSuite:
    def test_suite_counts_and_determinism(self):
        blocks = [
            Parallelepiped(1.5, 2.0, 2.5),
            Parallelepiped(1.0, 2.0, 4.0, 80.0, 95.0, 100.0),
        ]
        region = Region(lo=np.zeros(3), hi=np.array([12.0, 12.0, 8.0]))
        cfg = DfnConfig(size_dist=SizeDist(mu=math.log(3.0), sigma=0.3))
        a = build_dfn_suite(blocks, region, master_seed=42, config=cfg)
        b = build_dfn_suite(blocks, region, master_seed=42, config=cfg)
        assert len(a) == 2
        assert [len(d.fractures) for d in a] == [len(d.fractures) for d in b]
        assert np.array_equal(a[0].fractures[0].polygon.vertices,
                              b[0].fractures[0].polygon.vertices)

    def test_empty(self):
        assert build_dfn_suite([], region_10(), master_seed=1) == []


def test_jsonl_round_trip(tmp_path):
    dfn = generate_dfn([horizontal_set()], region_10(), seed=2,
                       config=DfnConfig(random_fraction=0.1))
    path = tmp_path / "dfn.jsonl"
    save_dfn_jsonl(dfn, path)
    back = load_dfn_jsonl(path)
    assert back.seed == dfn.seed
    assert len(back.fractures) == len(dfn.fractures)
    assert np.allclose(back.fractures[0].polygon.vertices,
                       dfn.fractures[0].polygon.vertices, atol=1e-9)
