import math

import numpy as np
import pytest

from fracsynth.analysis import (
    BlockStats,
    block_statistics,
    classify_nodes,
    save_block_stats_csv,
    save_ternary_svg,
    save_topology_csv,
    save_volume_cdf_svg,
    ternary_coordinates,
    topology_summary,
)
from fracsynth.errors import ValidationError
from fracsynth.geometry import Orientation


def seg(a, b):
    return np.array([a, b], dtype=float)


class TestClassifyNodes:
    def test_isolated_segment(self):
        nodes = classify_nodes([seg((0, 0), (1, 0))])
        assert sorted(n.kind for n in nodes) == ["I", "I"]

    def test_x_cross(self):
        nodes = classify_nodes([seg((-1, 0), (1, 0)), seg((0, -1), (0, 1))])
        kinds = sorted(n.kind for n in nodes)
        assert kinds == ["I", "I", "I", "I", "X"]

    def test_t_junction(self):
        nodes = classify_nodes([seg((-1, 0), (1, 0)), seg((0, -1), (0, 0))])
        kinds = sorted(n.kind for n in nodes)
        assert kinds == ["I", "I", "I", "Y"]

    def test_grid_3x3(self):
        polys = []
        for k in range(3):
            y = k - 1.0
            polys.append(seg((-2, y), (2, y)))
            polys.append(seg((k - 1.0, -2), (k - 1.0, 2)))
        nodes = classify_nodes(polys)
        kinds = [n.kind for n in nodes]
        assert kinds.count("I") == 12
        assert kinds.count("X") == 9
        assert kinds.count("Y") == 0

    def test_boundary_modes(self):
        boundary = (0.0, 10.0, 0.0, 10.0)
        polys = [seg((0.0, 5.0), (10.0, 5.0))]
        counted = classify_nodes(polys, boundary=boundary, boundary_mode="count")
        assert sorted(n.kind for n in counted) == ["I", "I"]
        excluded = classify_nodes(polys, boundary=boundary, boundary_mode="exclude")
        assert excluded == []

    def test_permutation_and_rigid_invariance(self):
        polys = [seg((-1, 0), (1, 0)), seg((0, -1), (0, 1)), seg((0.5, -1), (0.5, 0))]
        a = topology_summary(classify_nodes(polys))
        b = topology_summary(classify_nodes(polys[::-1]))
        ang = 0.8
        r = np.array([[math.cos(ang), -math.sin(ang)], [math.sin(ang), math.cos(ang)]])
        moved = [p @ r.T + np.array([3.0, -2.0]) for p in polys]
        c = topology_summary(classify_nodes(moved))
        assert (a.n_i, a.n_x, a.n_y) == (b.n_i, b.n_x, b.n_y) == (c.n_i, c.n_x, c.n_y)


class TestTopologySummary:
    def test_x_cross_cl(self):
        s = topology_summary(classify_nodes([seg((-1, 0), (1, 0)), seg((0, -1), (0, 1))]))
        assert s.n_lines == pytest.approx(2.0)
        assert s.c_l == pytest.approx(1.0)

    def test_t_junction_cl(self):
        s = topology_summary(classify_nodes([seg((-1, 0), (1, 0)), seg((0, -1), (0, 0))]))
        assert s.n_lines == pytest.approx(2.0)
        assert s.c_l == pytest.approx(1.0)

    def test_single_segment(self):
        s = topology_summary(classify_nodes([seg((0, 0), (1, 0))]))
        assert s.n_lines == pytest.approx(1.0)
        assert s.c_l == 0.0

    def test_empty(self):
        s = topology_summary([])
        assert s.c_l == 0.0
        assert s.proportions == (0.0, 0.0, 0.0)

    def test_proportions_sum(self):
        s = topology_summary(classify_nodes([seg((-1, 0), (1, 0)), seg((0, -1), (0, 1))]))
        assert sum(s.proportions) == pytest.approx(1.0, abs=1e-12)


class TestTernary:
    def test_vertices(self):
        from fracsynth.analysis import TopologySummary

        assert ternary_coordinates(TopologySummary(4, 0, 0)) == pytest.approx((0.0, 0.0))
        x, y = ternary_coordinates(TopologySummary(0, 7, 0))
        assert (x, y) == pytest.approx((0.5, 0.86603), abs=1e-5)
        assert ternary_coordinates(TopologySummary(0, 0, 3)) == pytest.approx((1.0, 0.0))

    def test_centroid(self):
        from fracsynth.analysis import TopologySummary

        x, y = ternary_coordinates(TopologySummary(5, 5, 5))
        assert (x, y) == pytest.approx((0.5, 0.28868), abs=1e-5)


def orthogonal_sets(spacings):
    return [
        (Orientation(90.0, 90.0), spacings[0]),  # normal = east
        (Orientation(90.0, 0.0), spacings[1]),   # normal = north
        (Orientation(0.0, 0.0), spacings[2]),    # normal = up
    ]


class TestBlockStatistics:
    def test_uniform_unit_grid(self):
        stats = block_statistics(orthogonal_sets((1.0, 1.0, 1.0)), (10.0, 10.0, 10.0),
                                 jitter=0.0, seed=0)
        assert len(stats.volumes) == 1000
        assert np.allclose(stats.volumes, 1.0)
        assert stats.palmstrom_shares == {"Equidimensional": 100.0}
        assert stats.singh_shares == {"Cubic": 100.0}

    def test_1_2_4_grid(self):
        stats = block_statistics(orthogonal_sets((1.0, 2.0, 4.0)), (10.0, 10.0, 10.0),
                                 jitter=0.0, seed=0)
        assert np.allclose(stats.volumes, 8.0)
        # f=2, e=2 with tie-to-lower thresholds
        assert stats.palmstrom_shares == {"Equidimensional": 100.0}

    def test_jitter_spreads_volumes(self):
        spans = []
        for seed in range(10):
            stats = block_statistics(orthogonal_sets((1.0, 1.0, 1.0)), (10.0, 10.0, 10.0),
                                     jitter=0.5, seed=seed)
            spans.append(stats.volumes.max() / stats.volumes.min())
        assert np.median(spans) > 10.0

    def test_coplanar_rejected(self):
        sets = [
            (Orientation(90.0, 90.0), 1.0),
            (Orientation(90.0, 90.0), 1.0),
            (Orientation(0.0, 0.0), 1.0),
        ]
        with pytest.raises(ValidationError):
            block_statistics(sets, (10.0, 10.0, 10.0))

    def test_cdf_monotone_to_100(self):
        stats = block_statistics(orthogonal_sets((1.0, 2.0, 3.0)), (10.0, 10.0, 10.0),
                                 jitter=0.3, seed=1)
        cdf = stats.volume_cdf()
        percents = [c for _, c in cdf]
        assert percents == sorted(percents)
        assert percents[-1] == pytest.approx(100.0)
        shares = sum(stats.palmstrom_shares.values())
        assert shares == pytest.approx(100.0, abs=1e-9)
        assert sum(stats.singh_shares.values()) == pytest.approx(100.0, abs=1e-9)


def test_csv_and_svg_emission(tmp_path):
    nodes = classify_nodes([seg((-1, 0), (1, 0)), seg((0, -1), (0, 1))])
    s = topology_summary(nodes)
    save_topology_csv([("fixture", s)], tmp_path / "topo.csv")
    assert (tmp_path / "topo.csv").read_text().startswith("label,")
    save_ternary_svg([s], tmp_path / "ternary.svg")
    assert "<svg" in (tmp_path / "ternary.svg").read_text()
    stats = block_statistics(orthogonal_sets((1.0, 2.0, 3.0)), (10.0, 10.0, 10.0),
                             jitter=0.2, seed=3)
    save_block_stats_csv(stats, tmp_path / "blocks.csv")
    save_volume_cdf_svg(stats, tmp_path / "cdf.svg")
    text = (tmp_path / "blocks.csv").read_text()
    assert "jittered-persistent-plane-decomposition" in text


def test_cl_scale_invariance():
    polys = [seg((-1, 0), (1, 0)), seg((0, -1), (0, 1)), seg((0.5, -1), (0.5, 0))]
    base = topology_summary(classify_nodes(polys))
    scaled = [p * 1000.0 for p in polys]
    big = topology_summary(classify_nodes(scaled))
    assert (base.n_i, base.n_x, base.n_y) == (big.n_i, big.n_x, big.n_y)
    assert base.c_l == big.c_l
