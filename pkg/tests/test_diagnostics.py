import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from kpochaos import diagnostics as dg
from kpochaos.quantum import Grid2D


def brute_force_clusters(points, radius):
    n = len(points)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            i = parent[i]
        return i

    for i, j in itertools.combinations(range(n), 2):
        if np.hypot(*(points[i] - points[j])) <= radius:
            parent[find(i)] = find(j)
    return len({find(i) for i in range(n)})


@given(st.lists(st.tuples(st.floats(-2, 2), st.floats(-2, 2)), min_size=1, max_size=40),
       st.floats(0.01, 1.0))
def test_cluster_count_matches_brute_force(pts, radius):
    pts = np.array(pts)
    assert dg.count_clusters(pts, radius) == brute_force_clusters(pts, radius)


def test_cluster_centers():
    pts = np.array([[0, 0], [0.01, 0], [1, 1], [1.02, 1]])
    c = dg.cluster_centers(pts, 0.05)
    assert sorted(map(tuple, np.round(c, 3))) == [(0.005, 0.0), (1.01, 1.0)]
    assert dg.count_clusters(np.empty((0, 2)), 0.1) == 0


def test_box_counting_scales():
    t = np.linspace(0, 2 * np.pi, 20000)
    circle = np.column_stack([2 * np.cos(t), 2 * np.sin(t)])
    assert 1.8 <= dg.box_count_ratio(circle) <= 2.3
    g = np.linspace(-2.4, 2.4, 400)
    area = np.array([(x, y) for x in g for y in g])
    assert 3.6 <= dg.box_count_ratio(area) <= 4.1
    assert dg.occupied_cells([[10.0, 10.0]], 50) == 0


def test_top_mass_cells():
    v = np.zeros((5, 5))
    v[2, 2], v[0, 4] = 10.0, 1.0
    g = Grid2D(np.arange(5.0), np.arange(5.0), v)
    np.testing.assert_array_equal(dg.top_mass_cells(g, 0.5), [[2.0, 2.0]])
    assert len(dg.top_mass_cells(g, 0.95)) == 2


def test_nearest_distances():
    d = dg.nearest_distances([[0, 0], [3, 4]], [[0, 0], [0, 4]])
    assert d.tolist() == pytest.approx([0.0, 3.0])
