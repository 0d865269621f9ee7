import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import sparse

from hemiembed.equator import (
    EmbeddingError,
    GeodesicTable,
    boundary_csv,
    classical_mds,
    flatten_and_peel,
    geodesics,
    peel_hulls,
    stretch_distances,
)
from hemiembed.pixelgraph import build_neighborhoods
from hemiembed.render import sample_hemisphere


def floyd_warshall(W):
    n = len(W)
    d = np.where(W > 0, W, np.inf)
    np.fill_diagonal(d, 0)
    for k in range(n):
        d = np.minimum(d, d[:, k:k + 1] + d[k:k + 1, :])
    return d


def test_geodesics_match_floyd_warshall_small(rng):
    W = np.triu(rng.integers(1, 9, size=(30, 30)) * (rng.uniform(size=(30, 30)) < 0.2), 1)
    W = W + W.T + np.diag(np.zeros(30))
    # Chain the nodes so the graph is connected.
    for i in range(29):
        W[i, i + 1] = W[i + 1, i] = W[i, i + 1] or 9
    t = geodesics(sparse.csr_matrix(W.astype(float)))
    np.testing.assert_array_equal(t.dist, floyd_warshall(W.astype(float)))
    assert t.connected and t.dropped == 0


def test_geodesics_keep_largest_component():
    W = np.zeros((5, 5))
    W[0, 1] = W[1, 0] = 1
    W[1, 2] = W[2, 1] = 1
    W[3, 4] = W[4, 3] = 1
    t = geodesics(sparse.csr_matrix(W))
    np.testing.assert_array_equal(t.nodes, [0, 1, 2])
    assert t.dropped == 2
    assert t.d_max == 2


def test_geodesics_from_graph(rng):
    g = build_neighborhoods(rng.normal(size=(40, 3)), 8)
    t = geodesics(g)
    A = g.adjacency()[t.nodes][:, t.nodes].toarray()
    np.testing.assert_allclose(t.dist, floyd_warshall(A), atol=1e-12)


def test_stretch():
    d = np.array([[0.0, 1.0], [1.0, 0.0]])
    out = stretch_distances(d, 1.0, 0.1)
    assert out[0, 1] == pytest.approx(np.tan(np.pi / 2.1))
    np.testing.assert_array_equal(stretch_distances(np.zeros((2, 2))), 0)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_mds_recovers_planar_configuration(seed):
    x = np.random.default_rng(seed).normal(size=(25, 2))
    d = np.linalg.norm(x[:, None] - x[None], axis=-1)
    y, vals = classical_mds(d, 2)
    dy = np.linalg.norm(y[:, None] - y[None], axis=-1)
    np.testing.assert_allclose(dy, d, atol=1e-8)
    assert vals[0] >= vals[1] > 0


def test_mds_rejects_degenerate():
    x = np.column_stack([np.arange(6.0), np.zeros(6)])
    d = np.abs(x[:, None, 0] - x[None, :, 0])
    with pytest.raises(EmbeddingError):
        classical_mds(d, 2)
    with pytest.raises(EmbeddingError):
        classical_mds(np.zeros((2, 2)), 2)


def test_peel_stops_at_first_layer_reaching_target(rng):
    pts = rng.normal(size=(400, 2))
    labeled, sizes = peel_hulls(pts, 0.05)
    assert len(labeled) == sum(sizes)
    assert sum(sizes) >= 20
    assert sum(sizes[:-1]) < 20


def test_peel_outermost_layer_is_hull():
    ring = np.column_stack([np.cos(np.linspace(0, 2 * np.pi, 20, endpoint=False)),
                            np.sin(np.linspace(0, 2 * np.pi, 20, endpoint=False))])
    pts = np.vstack([ring, 0.1 * ring])
    labeled, sizes = peel_hulls(pts, 0.05)
    np.testing.assert_array_equal(labeled, np.arange(20))
    assert sizes == [20]


def test_hemisphere_boundary_is_near_equator():
    P = sample_hemisphere(1000, 11)
    d = np.arccos(np.clip(P @ P.T, -1, 1))
    np.fill_diagonal(d, 0)
    res = flatten_and_peel(GeodesicTable(d, np.arange(1000), 0), 0.05)
    assert (P[res.boundary, 2] < 0.3).mean() >= 0.9


def test_boundary_csv(tmp_path):
    boundary_csv(tmp_path / "b.csv", np.array([5, 17]), 8)
    rows = np.loadtxt(tmp_path / "b.csv", delimiter=",", skiprows=1, dtype=int)
    np.testing.assert_array_equal(rows, [[0, 5], [2, 1]])
