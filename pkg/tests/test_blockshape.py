import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracsynth.blockshape import (
    ClassThresholds,
    ParameterRanges,
    Parallelepiped,
    classify,
    joint_sets_from_block,
    load_selection_jsonl,
    export_selection_jsonl,
    sample_parallelepipeds,
    select_representatives,
)
from fracsynth.errors import ValidationError
from fracsynth.geometry import orientation_to_normal


class TestClassify:
    def test_unit_cube(self):
        c = classify(Parallelepiped(1, 1, 1))
        assert c.palmstrom == "Equidimensional"
        assert c.singh == "Cubic"

    def test_long(self):
        c = classify(Parallelepiped(1, 1, 5))
        assert c.palmstrom == "Long"

    def test_long_flat(self):
        c = classify(Parallelepiped(1, 3, 9))
        assert c.palmstrom == "LongFlat"

    def test_boundary_tie_goes_low(self):
        # f = e = 2 exactly: assigned to the lower-ratio class
        c = classify(Parallelepiped(1, 2, 4))
        assert c.palmstrom == "Equidimensional"

    @given(s=st.floats(0.01, 100.0))
    @settings(max_examples=100, deadline=None)
    def test_scale_invariance(self, s):
        p = Parallelepiped(1.0, 2.5, 4.0, 80.0, 95.0, 110.0)
        q = Parallelepiped(s * 1.0, s * 2.5, s * 4.0, 80.0, 95.0, 110.0)
        assert classify(p) == classify(q)


class TestSampling:
    def test_count_and_determinism(self):
        a = sample_parallelepipeds(128, seed=7)
        b = sample_parallelepipeds(128, seed=7)
        assert len(a) == 128
        assert a == b

    def test_degenerate_ranges_unit_cube(self):
        r = ParameterRanges(edge=(1.0, 1.0), alpha12=(90, 90), alpha13=(90, 90), alpha23=(90, 90))
        (p,) = sample_parallelepipeds(1, ranges=r, seed=0)
        assert (p.a1, p.a2, p.a3) == (1.0, 1.0, 1.0)
        assert p.volume() == pytest.approx(1.0)

    def test_invalid_interval(self):
        with pytest.raises(ValidationError):
            sample_parallelepipeds(4, ranges=ParameterRanges(edge=(2.0, 1.0)))
        with pytest.raises(ValidationError):
            sample_parallelepipeds(0)

    def test_coverage_of_parameter_box(self):
        pop = sample_parallelepipeds(512, seed=3)
        f = np.array([p.flatness for p in pop])
        e = np.array([p.elongation for p in pop])
        assert f.min() < 1.3 and f.max() > 4.0
        assert e.min() < 1.3 and e.max() > 4.0


class TestSelection:
    def test_whole_population(self):
        pop = sample_parallelepipeds(16, seed=1)
        sel = select_representatives(pop, 16)
        assert sel == pop or sorted(map(id, sel)) == sorted(map(id, pop))

    def test_k_too_large(self):
        pop = sample_parallelepipeds(4, seed=1)
        with pytest.raises(ValidationError):
            select_representatives(pop, 5)

    def test_all_cubes_degenerate_spread(self):
        pop = [Parallelepiped(1, 1, 1) for _ in range(6)]
        sel = select_representatives(pop, 3)
        assert len(sel) == 3

    def test_class_coverage(self):
        pop = sample_parallelepipeds(1024, seed=11)
        sel = select_representatives(pop, 27)
        pop_palm = {classify(p).palmstrom for p in pop}
        sel_palm = {classify(p).palmstrom for p in sel}
        assert sel_palm == pop_palm
        sel_singh = {classify(p).singh for p in sel}
        assert len(sel_singh) >= 6

    def test_idempotent_on_own_output(self):
        pop = sample_parallelepipeds(256, seed=2)
        sel = select_representatives(pop, 12)
        again = select_representatives(sel, 12)
        assert sorted(map(id, again)) == sorted(map(id, sel))


class TestJointSets:
    def test_unit_cube(self):
        sets = joint_sets_from_block(Parallelepiped(1, 1, 1))
        spacings = sorted(s for _, s in sets)
        assert spacings == pytest.approx([1.0, 1.0, 1.0])
        normals = [orientation_to_normal(o) for o, _ in sets]
        for i in range(3):
            for j in range(i + 1, 3):
                assert abs(np.dot(normals[i], normals[j])) < 1e-9

    def test_scaled_box(self):
        sets = joint_sets_from_block(Parallelepiped(1, 2, 4))
        spacings = sorted(s for _, s in sets)
        assert spacings == pytest.approx([1.0, 2.0, 4.0])

    def test_sheared_block(self):
        p = Parallelepiped(1, 1, 1, alpha12=60.0)
        sets = joint_sets_from_block(p)
        spacings = sorted(s for _, s in sets)
        s60 = math.sin(math.radians(60))
        assert spacings[0] == pytest.approx(s60, rel=1e-9)
        assert spacings[1] == pytest.approx(s60, rel=1e-9)
        # the two sheared set normals are 120 degrees apart
        normals = [orientation_to_normal(o) for o, _ in sets]
        horiz = [n for n in normals if abs(n[2]) < 1e-9]
        assert len(horiz) == 2
        ang = math.degrees(math.acos(np.clip(np.dot(horiz[0], horiz[1]), -1, 1)))
        assert ang == pytest.approx(120.0, abs=1e-6) or ang == pytest.approx(60.0, abs=1e-6)

    @given(st.integers(0, 500))
    @settings(max_examples=60, deadline=None)
    def test_reconstruction_volume(self, seed):
        rng = np.random.default_rng(seed)
        edges = np.sort(rng.uniform(0.5, 6.0, 3))
        angs = rng.uniform(65.0, 115.0, 3)
        try:
            p = Parallelepiped(*edges, *angs)
        except ValidationError:
            return
        sets = joint_sets_from_block(p)
        normals = np.stack([orientation_to_normal(o) for o, _ in sets])
        spacings = np.array([s for _, s in sets])
        cell_volume = np.prod(spacings) / abs(np.linalg.det(normals))
        assert cell_volume == pytest.approx(p.volume(), rel=1e-9)


def test_selection_jsonl_round_trip(tmp_path):
    pop = sample_parallelepipeds(32, seed=5)
    sel = select_representatives(pop, 4)
    path = tmp_path / "sel.jsonl"
    export_selection_jsonl(pop, sel, path)
    back = load_selection_jsonl(path)
    assert len(back) == 4
    assert back[0].a1 == pytest.approx(sel[0].a1)
