import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial import cKDTree

from hemiembed.pixelgraph import (
    EmptyGraphError,
    build_neighborhoods,
    build_vectors,
    default_k,
    dump_edges_csv,
    favor_fraction,
    knn_brute,
    remove_outliers,
)
from hemiembed.render import ImageStack


def test_knn_matches_kdtree(rng):
    x = rng.normal(size=(300, 5))
    idx, dist = knn_brute(x, 7)
    ref_d, ref_i = cKDTree(x).query(x, k=8)
    np.testing.assert_allclose(dist, ref_d[:, 1:], atol=1e-12)
    np.testing.assert_array_equal(idx, ref_i[:, 1:])


def test_knn_argument_checks(rng):
    x = rng.normal(size=(5, 2))
    with pytest.raises(ValueError):
        knn_brute(x, 0)
    with pytest.raises(ValueError):
        knn_brute(x, 5)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 12))
def test_graph_is_mutual_and_symmetric(seed, k):
    x = np.random.default_rng(seed).normal(size=(60, 3))
    g = build_neighborhoods(x, k)
    A = g.adjacency()
    assert abs(A - A.T).max() == 0
    for p in range(g.size):
        for q in g.neighbors(p):
            assert q in g.knn[p] and p in g.knn[q]
    assert np.all(g.degrees() <= k)
    p, q, d = g.edges()
    np.testing.assert_allclose(d, np.linalg.norm(x[p] - x[q], axis=1))


def test_favor_fraction_bounds(rng):
    g = build_neighborhoods(rng.normal(size=(80, 3)), 6)
    f = favor_fraction(g.knn)
    assert np.all((0 <= f) & (f <= 1))
    np.testing.assert_allclose(f * 6, g.degrees())


def test_outlier_removal_drops_isolated_point(rng):
    x = np.vstack([rng.normal(size=(100, 3)) * 0.1, [[5.0, 5.0, 5.0]]])
    g = remove_outliers(build_neighborhoods(x, 5), 0.8)
    assert 100 in g.removed
    assert 100 not in g.pixels


def test_outlier_removal_can_empty_graph(rng):
    g = build_neighborhoods(rng.normal(size=(12, 3)), 10)
    with pytest.raises(EmptyGraphError):
        remove_outliers(g, 1.0)


def test_build_vectors_normalizes_and_drops_dark():
    mask = np.ones((2, 2), dtype=bool)
    imgs = np.zeros((3, 2, 2))
    imgs[:, 0, 0] = [3, 4, 0]
    imgs[:, 1, 1] = [1, 1, 1]
    v = build_vectors(ImageStack(imgs, mask))
    np.testing.assert_allclose(np.linalg.norm(v.vectors, axis=1), 1)
    np.testing.assert_array_equal(v.pixels, [0, 3])
    np.testing.assert_array_equal(v.dark, [1, 2])


def test_build_vectors_needs_three_images():
    with pytest.raises(ValueError):
        build_vectors(ImageStack(np.ones((2, 3, 3)), np.ones((3, 3), dtype=bool)))


def test_default_k():
    assert default_k(1000) == 50
    assert default_k(5000) == 60
    assert default_k(5000, cap=None) == 250
    assert default_k(10) == 3


def test_subgraph_keeps_internal_edges(rng):
    g = build_neighborhoods(rng.normal(size=(50, 2)), 6)
    keep = np.arange(0, 50, 2)
    s = g.subgraph(keep)
    assert s.size == 25
    ref = g.adjacency()[keep][:, keep]
    assert abs(s.adjacency() - ref).max() == 0


def test_edge_dump(tmp_path, rng):
    g = build_neighborhoods(rng.normal(size=(20, 3)), 4)
    dump_edges_csv(g, tmp_path / "e.csv")
    rows = np.loadtxt(tmp_path / "e.csv", delimiter=",", skiprows=1)
    assert len(rows) == len(g.edges()[0])
